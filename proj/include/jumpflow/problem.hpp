#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jumpflow/bsde.hpp"
#include "jumpflow/forward.hpp"
#include "jumpflow/measure.hpp"
#include "jumpflow/reflected.hpp"

namespace jumpflow {

using ClosedFormFn = std::function<double(std::size_t i, double t, std::span<const double> x)>;

/// Everything that defines one nonlocal problem (with or without obstacle).
struct ProblemSpec {
  std::string name;
  std::string description;
  /// Which structural conditions the problem exercises, e.g. "nonmonotone-in-q".
  std::vector<std::string> stresses;

  CoefficientSet coefficients;
  LevyMeasure measure;
  DriverSpec driver;
  std::optional<ObstacleSpec> obstacle;
  double t_start = 0.0;
  double horizon = 1.0;
  /// Probe start points x0; each probe is simulated from (t_start, x0).
  std::vector<std::vector<double>> starts;

  std::size_t default_paths = 100000;
  std::size_t default_steps = 50;
  int default_degree = 3;
  std::size_t oracle_nodes = 2001;
  std::size_t oracle_time_steps = 400;
  /// Known exact solution, when there is one.
  ClosedFormFn closed_form;

  std::size_t state_dim() const { return coefficients.state_dim; }
  std::size_t brownian_dim() const { return coefficients.brownian_dim; }
  std::size_t components() const { return driver.components; }
  TimeGrid grid(std::size_t steps) const { return TimeGrid(t_start, horizon, steps); }
};

} // namespace jumpflow
