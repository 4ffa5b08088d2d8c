#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "jumpflow/jumpflow.hpp"

namespace support {

using namespace jumpflow;

inline DriverFn constant_h(double c) {
  return [c](std::size_t, double, std::span<const double>, std::span<const double>,
             std::span<const double>, double) { return c; };
}

inline TerminalFn constant_g(double c) {
  return [c](std::size_t, std::span<const double>) { return c; };
}

/// One-dimensional problem with b, sigma constant and beta(e) = e.
inline ProblemSpec scalar_problem(double drift, double sigma, LevyMeasure measure, DriverFn h,
                                  TerminalFn g, double horizon, double x0,
                                  double driver_lipschitz = 1.0) {
  ProblemSpec p;
  p.name = "test";
  p.coefficients = harness::presets::arithmetic(drift, sigma);
  p.measure = std::move(measure);
  p.driver = DriverSpec{1, std::move(h), std::move(g), harness::presets::unit_weights(),
                        driver_lipschitz};
  p.horizon = horizon;
  p.starts = {{x0}};
  return p;
}

inline PathBundle bundle_for(const ProblemSpec &p, std::size_t paths, std::size_t steps,
                             std::uint64_t seed, std::size_t start = 0) {
  return simulate_paths(p.coefficients, p.measure, p.starts.at(start), p.grid(steps), paths, seed);
}

/// |a - b| <= max(rel |b|, k se).
inline bool within(double a, double b, double rel, double se, double k = 3.0) {
  return std::abs(a - b) <= std::max(rel * std::abs(b), k * se);
}

} // namespace support
