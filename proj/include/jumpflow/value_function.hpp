#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "jumpflow/error.hpp"
#include "jumpflow/forward.hpp"
#include "jumpflow/regression.hpp"

namespace jumpflow {

using TerminalFn = std::function<double(std::size_t i, std::span<const double> x)>;

/// Polynomial fit of every component at one grid node.
struct StepFit {
  PolynomialBasis basis;
  /// coefficients[i] belongs to component i.
  std::vector<std::vector<double>> coefficients;
  /// Evaluate the terminal function exactly instead of the fit.
  bool exact_terminal = false;
  /// Set for a basis fitted on a point mass: the node is evaluated as the next
  /// node's function plus anchor[i], which matches the fit at the point.
  std::vector<double> anchor;
};

/**
 * Per-node regression representation of (u^i)_{i <= m}, evaluable at any
 * (t, x): time is looked up at the nearest grid node (ties go to the earlier
 * node), space through the node's polynomial basis. Polynomials make every
 * stored function of polynomial growth; max_degree() is the certificate.
 */
class ValueFunction {
public:
  ValueFunction() = default;

  /// All nodes zero except the last, which evaluates `terminal` exactly.
  ValueFunction(TimeGrid grid, std::size_t components, TerminalFn terminal)
      : grid_(grid), components_(components), terminal_(std::move(terminal)),
        steps_(grid.steps + 1) {
    for (auto &s : steps_)
      s.coefficients.assign(components_, std::vector<double>{0.0});
    if (terminal_)
      steps_.back().exact_terminal = true;
  }

  static ValueFunction zero(const TimeGrid &grid, std::size_t components) {
    return ValueFunction(grid, components, nullptr);
  }

  /// u(t, x) = g(x) at every node.
  static ValueFunction terminal_extension(const TimeGrid &grid, std::size_t components,
                                          TerminalFn terminal) {
    ValueFunction vf(grid, components, std::move(terminal));
    for (auto &s : vf.steps_)
      s.exact_terminal = true;
    return vf;
  }

  /**
   * Closed-form polynomial value function in raw monomials:
   * coefficients(j, i) lists the coefficients of the raw basis of `degree`
   * in `dim` variables at node j for component i.
   */
  static ValueFunction from_polynomials(
      const TimeGrid &grid, std::size_t components, std::size_t dim, int degree,
      const std::function<std::vector<double>(std::size_t j, std::size_t i)> &coefficients) {
    ValueFunction vf(grid, components, nullptr);
    const auto basis = PolynomialBasis::raw(dim, degree);
    for (std::size_t j = 0; j <= grid.steps; ++j) {
      StepFit fit{basis, {}, false, {}};
      for (std::size_t i = 0; i < components; ++i) {
        auto c = coefficients(j, i);
        if (c.size() != basis.size())
          throw ConfigError("value function: expected " + std::to_string(basis.size()) +
                            " coefficients");
        fit.coefficients.push_back(std::move(c));
      }
      vf.steps_[j] = std::move(fit);
    }
    return vf;
  }

  const TimeGrid &grid() const noexcept { return grid_; }
  std::size_t components() const noexcept { return components_; }
  std::size_t nodes() const noexcept { return steps_.size(); }
  const TerminalFn &terminal() const noexcept { return terminal_; }

  const StepFit &step(std::size_t j) const { return steps_.at(j); }
  /// A point-mass fit at j < last node is anchored to node j + 1, which must be set already.
  void set_step(std::size_t j, StepFit fit) {
    fit.anchor.clear();
    if (!fit.exact_terminal && fit.basis.point_mass() && j + 1 < steps_.size()) {
      const auto &c = fit.basis.center();
      for (std::size_t i = 0; i < fit.coefficients.size(); ++i)
        fit.anchor.push_back(fit.basis.value(c, fit.coefficients[i]) - evaluate_step(j + 1, c, i));
    }
    steps_.at(j) = std::move(fit);
  }

  double evaluate_step(std::size_t j, std::span<const double> x, std::size_t i) const {
    const StepFit &s = steps_[j];
    if (s.exact_terminal)
      return terminal_(i, x);
    if (!s.anchor.empty())
      return evaluate_step(j + 1, x, i) + s.anchor[i];
    return s.basis.value(x, s.coefficients[i]);
  }

  double evaluate(double t, std::span<const double> x, std::size_t i) const {
    return evaluate_step(grid_.nearest(t), x, i);
  }

  int max_degree() const {
    int d = 0;
    for (const auto &s : steps_)
      if (!s.exact_terminal)
        d = std::max(d, s.basis.max_degree());
    return d;
  }

private:
  TimeGrid grid_;
  std::size_t components_ = 0;
  TerminalFn terminal_;
  std::vector<StepFit> steps_;
};

/// Value of u^i at (t, x), nearest-node in time.
inline double evaluate(const ValueFunction &vf, double t, std::span<const double> x,
                       std::size_t i = 0) {
  return vf.evaluate(t, x, i);
}

} // namespace jumpflow
