#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "jumpflow/error.hpp"
#include "jumpflow/forward.hpp"
#include "jumpflow/measure.hpp"

namespace jumpflow {

using WeightFn = std::function<double(std::size_t i, double t, std::span<const double> x,
                                      std::span<const double> mark)>;

/**
 * The weights gamma_i(t, x, e) of the nonlocal arguments B_i u. They must
 * satisfy |gamma_i| <= C (1 ^ |e|) but may change sign.
 */
struct WeightFamily {
  std::size_t components = 1;
  WeightFn gamma;
  double bound = 1.0;

  double operator()(std::size_t i, double t, std::span<const double> x,
                    std::span<const double> mark) const {
    return gamma(i, t, x, mark);
  }

  /// Worst sampled ratio |gamma_i| / (C (1 ^ |e|)); <= 1 when the bound holds.
  double bound_ratio(const LevyMeasure &measure, double t,
                     std::span<const std::vector<double>> points) const {
    double worst = 0.0;
    for (std::size_t i = 0; i < components; ++i)
      for (const auto &x : points)
        for (std::size_t a = 0; a < measure.size(); ++a) {
          double ne = 0.0;
          for (double e : measure.mark(a))
            ne += e * e;
          const double cap = bound * std::min(1.0, std::sqrt(ne));
          worst = std::max(worst, std::abs(gamma(i, t, x, measure.mark(a))) / cap);
        }
    return worst;
  }

  /// True when gamma_i >= 0 at every sampled point.
  bool nonnegative_on(const LevyMeasure &measure, double t,
                      std::span<const std::vector<double>> points) const {
    for (std::size_t i = 0; i < components; ++i)
      for (const auto &x : points)
        for (std::size_t a = 0; a < measure.size(); ++a)
          if (gamma(i, t, x, measure.mark(a)) < 0.0)
            return false;
    return true;
  }
};

namespace detail {
inline double checked(double v, const char *what) {
  if (!std::isfinite(v))
    throw EvaluationError(std::string(what) + ": function value is not finite");
  return v;
}
} // namespace detail

/**
 * B u(t,x) = int gamma(t,x,e) (u(t, x + beta(t,x,e)) - u(t,x)) lambda(de).
 *
 * `u(t, x)` returns a real, `gamma(t, x, mark)` the weight and
 * `beta(t, x, mark, out)` writes the jump into `out`.
 */
template <class U, class Gamma, class Beta>
double op_B(U &&u, Gamma &&gamma, Beta &&beta, const LevyMeasure &measure, double t,
            std::span<const double> x) {
  if (measure.empty())
    return 0.0;
  const std::size_t k = x.size();
  const double ux = detail::checked(u(t, x), "op_B");
  std::array<double, kMaxStateDim> shift{};
  std::array<double, kMaxStateDim> moved{};
  double acc = 0.0;
  for (std::size_t a = 0; a < measure.size(); ++a) {
    const auto mark = measure.mark(a);
    beta(t, x, mark, std::span<double>(shift.data(), k));
    for (std::size_t c = 0; c < k; ++c)
      moved[c] = x[c] + shift[c];
    const double v = detail::checked(u(t, std::span<const double>(moved.data(), k)), "op_B");
    acc += gamma(t, x, mark) * (v - ux) * measure.weight(a);
  }
  return acc;
}

/**
 * K u(t,x) = int (u(t, x + beta) - u(t,x) - beta . grad_u(t,x)) lambda(de).
 * `grad_u(t, x, out)` writes the spatial gradient.
 */
template <class U, class Grad, class Beta>
double op_K(U &&u, Grad &&grad_u, Beta &&beta, const LevyMeasure &measure, double t,
            std::span<const double> x) {
  if (measure.empty())
    return 0.0;
  const std::size_t k = x.size();
  const double ux = detail::checked(u(t, x), "op_K");
  std::array<double, kMaxStateDim> grad{};
  grad_u(t, x, std::span<double>(grad.data(), k));
  std::array<double, kMaxStateDim> shift{};
  std::array<double, kMaxStateDim> moved{};
  double acc = 0.0;
  for (std::size_t a = 0; a < measure.size(); ++a) {
    beta(t, x, measure.mark(a), std::span<double>(shift.data(), k));
    double first_order = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      moved[c] = x[c] + shift[c];
      first_order += shift[c] * grad[c];
    }
    const double v = detail::checked(u(t, std::span<const double>(moved.data(), k)), "op_K");
    acc += (v - ux - first_order) * measure.weight(a);
  }
  return acc;
}

/// Default central-difference step h = 1e-4 (1 + |x|).
inline double default_difference_step(std::span<const double> x) {
  double n2 = 0.0;
  for (double v : x)
    n2 += v * v;
  return 1e-4 * (1.0 + std::sqrt(n2));
}

/// Central-difference gradient of u at (t, x); h <= 0 selects the default step.
template <class U>
void central_difference_gradient(U &&u, double t, std::span<const double> x,
                                 std::span<double> out, double h = 0.0) {
  if (!(h > 0.0))
    h = default_difference_step(x);
  std::array<double, kMaxStateDim> probe{};
  std::copy(x.begin(), x.end(), probe.begin());
  const std::span<const double> view(probe.data(), x.size());
  for (std::size_t c = 0; c < x.size(); ++c) {
    probe[c] = x[c] + h;
    const double up = u(t, view);
    probe[c] = x[c] - h;
    const double down = u(t, view);
    probe[c] = x[c];
    out[c] = (up - down) / (2.0 * h);
  }
}

/// op_K with the gradient replaced by central differences of step h.
template <class U, class Beta>
double op_K_fd(U &&u, Beta &&beta, const LevyMeasure &measure, double t,
               std::span<const double> x, double h = 0.0) {
  return op_K(
      u,
      [&](double tt, std::span<const double> xx, std::span<double> g) {
        central_difference_gradient(u, tt, xx, g, h);
      },
      beta, measure, t, x);
}

} // namespace jumpflow
