#pragma once

#include "jumpflow/error.hpp"
#include "jumpflow/rng.hpp"
#include "jumpflow/parallel.hpp"
#include "jumpflow/measure.hpp"
#include "jumpflow/forward.hpp"
#include "jumpflow/nonlocal.hpp"
#include "jumpflow/regression.hpp"
#include "jumpflow/value_function.hpp"
#include "jumpflow/bsde.hpp"
#include "jumpflow/picard.hpp"
#include "jumpflow/reflected.hpp"
#include "jumpflow/problem.hpp"
#include "jumpflow/oracle.hpp"
#include "jumpflow/harness/registry.hpp"
#include "jumpflow/harness/config.hpp"
#include "jumpflow/harness/run.hpp"
