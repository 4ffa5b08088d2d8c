#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jumpflow/error.hpp"
#include "jumpflow/problem.hpp"

namespace jumpflow::harness {

namespace presets {

inline CoefficientSet arithmetic(double drift, double sigma, double jump_bound = 1.0) {
  CoefficientSet c;
  c.state_dim = 1;
  c.brownian_dim = 1;
  c.drift = [drift](double, std::span<const double>, std::span<double> out) { out[0] = drift; };
  c.diffusion = [sigma](double, std::span<const double>, std::span<double> out) {
    out[0] = sigma;
  };
  c.jump = [](double, std::span<const double>, std::span<const double> e, std::span<double> out) {
    out[0] = e[0];
  };
  c.lipschitz_bound = jump_bound;
  return c;
}

inline WeightFamily unit_weights(std::size_t m = 1) {
  return WeightFamily{m, [](std::size_t, double, std::span<const double>, std::span<const double>) {
                        return 1.0;
                      },
                      1.0};
}

/// gamma(e) = scale * e: changes sign with the mark.
inline WeightFamily signed_weights(double scale) {
  return WeightFamily{1,
                      [scale](std::size_t, double, std::span<const double>,
                              std::span<const double> e) { return scale * e[0]; },
                      std::abs(scale)};
}

inline TerminalFn identity_payoff() {
  return [](std::size_t, std::span<const double> x) { return x[0]; };
}
inline TerminalFn call_payoff(double strike) {
  return [strike](std::size_t, std::span<const double> x) { return std::max(x[0] - strike, 0.0); };
}
inline TerminalFn put_payoff(double strike) {
  return [strike](std::size_t, std::span<const double> x) { return std::max(strike - x[0], 0.0); };
}

/// h = -r y + kappa q (component-wise, m = 1).
inline DriverFn linear_driver(double r, double kappa) {
  return [r, kappa](std::size_t, double, std::span<const double>, std::span<const double> y,
                    std::span<const double>, double q) { return -r * y[0] + kappa * q; };
}

} // namespace presets

inline ProblemSpec martingale1d() {
  ProblemSpec p;
  p.name = "martingale1d";
  p.description = "h = 0, g(x) = x, sigma = 1, no jumps: u(t, x) = x";
  p.stresses = {"no-jumps", "martingale-representation"};
  p.coefficients = presets::arithmetic(0.0, 1.0);
  p.driver = DriverSpec{1, presets::linear_driver(0.0, 0.0), presets::identity_payoff(),
                        presets::unit_weights(), 0.0};
  p.horizon = 1.0;
  p.starts = {{0.0}, {1.0}};
  p.default_steps = 50;
  p.closed_form = [](std::size_t, double, std::span<const double> x) { return x[0]; };
  return p;
}

inline ProblemSpec purejump1d() {
  ProblemSpec p;
  p.name = "purejump1d";
  p.description = "pure compensated jumps beta(e) = e, atom (1, 1), g(x) = x, h = 0: u(t, x) = x";
  p.stresses = {"compensated-jumps", "jump-characterization"};
  p.coefficients = presets::arithmetic(0.0, 0.0);
  p.measure = LevyMeasure::scalar({{1.0, 1.0}});
  p.driver = DriverSpec{1, presets::linear_driver(0.0, 0.0), presets::identity_payoff(),
                        presets::unit_weights(), 0.0};
  p.horizon = 1.0;
  p.starts = {{1.0}};
  p.default_steps = 10;
  p.closed_form = [](std::size_t, double, std::span<const double> x) { return x[0]; };
  return p;
}

/// Linear problem with closed form u(t,x) = e^{-r(T-t)} (x + 0.3 kappa w (T-t)).
inline ProblemSpec linear1d() {
  constexpr double r = 0.05, kappa = 0.2, w = 1.0, jump = 0.3, T = 0.5;
  ProblemSpec p;
  p.name = "linear1d";
  p.description = "h = -0.05 y + 0.2 q, gamma = 1, atom (0.3, 1), g(x) = x: closed form";
  p.stresses = {"monotone", "closed-form"};
  p.coefficients = presets::arithmetic(0.0, 0.2);
  p.measure = LevyMeasure::scalar({{jump, w}});
  p.driver = DriverSpec{1, presets::linear_driver(r, kappa), presets::identity_payoff(),
                        presets::unit_weights(), kappa};
  p.horizon = T;
  p.starts = {{1.0}};
  p.default_steps = 50;
  p.closed_form = [=](std::size_t, double t, std::span<const double> x) {
    return std::exp(-r * (T - t)) * (x[0] + jump * kappa * w * (T - t));
  };
  return p;
}

inline ProblemSpec jumpcall1d() {
  ProblemSpec p;
  p.name = "jumpcall1d";
  p.description = "h = -0.05 y + 0.2 q, gamma = 1, atom (0.3, 1), g = (x - 1)^+, sigma = 0.2";
  p.stresses = {"monotone"};
  p.coefficients = presets::arithmetic(0.0, 0.2);
  p.measure = LevyMeasure::scalar({{0.3, 1.0}});
  p.driver = DriverSpec{1, presets::linear_driver(0.05, 0.2), presets::call_payoff(1.0),
                        presets::unit_weights(), 0.2};
  p.horizon = 0.5;
  p.starts = {{1.0}};
  p.default_steps = 100;
  return p;
}

inline ProblemSpec nonmonotone1d() {
  ProblemSpec p;
  p.name = "nonmonotone1d";
  p.description =
      "h = -0.05 y - 0.5 q (decreasing in q), gamma(e) = 2e (sign-changing), atoms (0.3, 1), "
      "(-0.2, 0.5), g = (x - 1)^+, sigma = 0.2";
  p.stresses = {"nonmonotone-in-q", "sign-changing-gamma"};
  p.coefficients = presets::arithmetic(0.0, 0.2);
  p.measure = LevyMeasure::scalar({{0.3, 1.0}, {-0.2, 0.5}});
  p.driver = DriverSpec{1, presets::linear_driver(0.05, -0.5), presets::call_payoff(1.0),
                        presets::signed_weights(2.0), 0.5};
  p.horizon = 0.5;
  p.starts = {{1.0}};
  p.default_steps = 100;
  return p;
}

inline ProblemSpec american1d() {
  ProblemSpec p;
  p.name = "american1d";
  p.description = "obstacle l = g = (1 - x)^+, h = -0.05 y, atom (-0.2, 0.5), sigma = 0.2";
  p.stresses = {"obstacle", "monotone"};
  p.coefficients = presets::arithmetic(0.0, 0.2);
  p.measure = LevyMeasure::scalar({{-0.2, 0.5}});
  p.driver = DriverSpec{1, presets::linear_driver(0.05, 0.0), presets::put_payoff(1.0),
                        presets::unit_weights(), 0.05};
  p.obstacle = ObstacleSpec{[](double, std::span<const double> x) {
    return std::max(1.0 - x[0], 0.0);
  }};
  p.horizon = 0.5;
  p.starts = {{1.0}};
  p.default_steps = 100;
  return p;
}

inline ProblemSpec nonmonotone_obstacle1d() {
  ProblemSpec p;
  p.name = "nonmonotone_obstacle1d";
  p.description = "obstacle l = g = (1 - x)^+, h = -0.05 y - 0.3 q, gamma(e) = 2e, atoms "
                  "(0.3, 0.5), (-0.2, 0.5), sigma = 0.2";
  p.stresses = {"obstacle", "nonmonotone-in-q", "sign-changing-gamma"};
  p.coefficients = presets::arithmetic(0.0, 0.2);
  p.measure = LevyMeasure::scalar({{0.3, 0.5}, {-0.2, 0.5}});
  p.driver = DriverSpec{1, presets::linear_driver(0.05, -0.3), presets::put_payoff(1.0),
                        presets::signed_weights(2.0), 0.3};
  p.obstacle = ObstacleSpec{[](double, std::span<const double> x) {
    return std::max(1.0 - x[0], 0.0);
  }};
  p.horizon = 0.5;
  p.starts = {{1.0}};
  p.default_steps = 100;
  return p;
}

/// m = 2 system with identical components coupled through (y^1 + y^2) / 2.
inline ProblemSpec coupled2() {
  ProblemSpec p;
  p.name = "coupled2";
  p.description = "m = 2, h_i = -0.05 (y1 + y2) / 2 + 0.2 q_i, gamma_i = 1, atom (0.3, 1), "
                  "g_i = (x - 1)^+";
  p.stresses = {"coupled-system", "monotone"};
  p.coefficients = presets::arithmetic(0.0, 0.2);
  p.measure = LevyMeasure::scalar({{0.3, 1.0}});
  p.driver = DriverSpec{
      2,
      [](std::size_t, double, std::span<const double>, std::span<const double> y,
         std::span<const double>, double q) { return -0.05 * 0.5 * (y[0] + y[1]) + 0.2 * q; },
      presets::call_payoff(1.0), presets::unit_weights(2), 0.2};
  p.horizon = 0.5;
  p.starts = {{1.0}};
  p.default_steps = 50;
  return p;
}

/// Log-price Merton-type model with two jump atoms, discounted call payoff.
inline ProblemSpec jumpmerton1d() {
  constexpr double r = 0.05, sigma = 0.2;
  ProblemSpec p;
  p.name = "jumpmerton1d";
  p.description = "log-price with atoms (-0.1, 0.5), (0.1, 0.3); h = -0.05 y; g = (e^x - 1)^+";
  p.stresses = {"monotone", "q-independent"};
  p.measure = LevyMeasure::scalar({{-0.1, 0.5}, {0.1, 0.3}});
  double convexity = 0.0;
  for (const auto &a : p.measure.atoms())
    convexity += a.weight * (std::exp(a.mark[0]) - 1.0 - a.mark[0]);
  p.coefficients = presets::arithmetic(r - 0.5 * sigma * sigma - convexity, sigma);
  p.driver = DriverSpec{1, presets::linear_driver(r, 0.0),
                        [](std::size_t, std::span<const double> x) {
                          return std::max(std::exp(x[0]) - 1.0, 0.0);
                        },
                        presets::unit_weights(), r};
  p.horizon = 0.5;
  p.starts = {{0.0}};
  p.default_steps = 50;
  return p;
}

/// Registered problems by name.
inline const std::map<std::string, ProblemSpec> &registry() {
  static const std::map<std::string, ProblemSpec> problems = [] {
    std::map<std::string, ProblemSpec> out;
    for (auto make : {martingale1d, purejump1d, linear1d, jumpcall1d, nonmonotone1d, american1d,
                      nonmonotone_obstacle1d, coupled2, jumpmerton1d}) {
      ProblemSpec p = make();
      out.emplace(p.name, std::move(p));
    }
    return out;
  }();
  return problems;
}

inline const ProblemSpec &find_problem(const std::string &name) {
  const auto &reg = registry();
  auto it = reg.find(name);
  if (it == reg.end())
    throw ConfigError("unknown problem '" + name + "'");
  return it->second;
}

struct ProblemListing {
  std::string name;
  std::size_t state_dim = 1;
  std::size_t brownian_dim = 1;
  std::size_t components = 1;
  std::size_t atoms = 0;
  bool obstacle = false;
  std::vector<std::string> stresses;
  std::string description;
};

inline std::vector<ProblemListing> list_problems() {
  std::vector<ProblemListing> out;
  for (const auto &[name, p] : registry())
    out.push_back({name, p.state_dim(), p.brownian_dim(), p.components(), p.measure.size(),
                   p.obstacle.has_value(), p.stresses, p.description});
  return out;
}

} // namespace jumpflow::harness
