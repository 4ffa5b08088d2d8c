#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "jumpflow/bsde.hpp"
#include "jumpflow/error.hpp"
#include "jumpflow/forward.hpp"
#include "jumpflow/parallel.hpp"
#include "jumpflow/value_function.hpp"

namespace jumpflow {

/// Pathwise pair (y, v) on the first `steps` nodes: y[p][j][i], v[p][j][i][a].
struct PathwisePair {
  std::size_t paths = 0;
  std::size_t steps = 0;
  std::size_t components = 1;
  std::size_t atoms = 0;
  std::vector<double> y;
  std::vector<double> v;
};

/**
 * ||(y, v)||_alpha = sqrt( E sum_j e^{alpha t_j} (|y_j|^2 + ||v_j||^2_{L2(lambda)}) dt )
 * with the expectation replaced by the path average. y(p, j, i) and
 * v(p, j, i, a) are callables; the weights are the atom masses.
 */
template <class YFn, class VFn>
double alpha_norm(std::size_t paths, std::size_t steps, std::size_t components,
                  std::span<const double> atom_weights, const TimeGrid &grid, double alpha,
                  YFn &&y, VFn &&v) {
  if (paths == 0)
    return 0.0;
  const double dt = grid.dt();
  const double total = chunked_reduce(
      paths, 0.0,
      [&](std::size_t begin, std::size_t end) {
        double acc = 0.0;
        for (std::size_t p = begin; p < end; ++p)
          for (std::size_t j = 0; j < steps; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < components; ++i) {
              const double yv = y(p, j, i);
              s += yv * yv;
              for (std::size_t a = 0; a < atom_weights.size(); ++a) {
                const double vv = v(p, j, i, a);
                s += vv * vv * atom_weights[a];
              }
            }
            acc += std::exp(alpha * grid.node(j)) * s * dt;
          }
        return acc;
      },
      [](double a, double b) { return a + b; });
  return std::sqrt(total / static_cast<double>(paths));
}

inline double alpha_norm(const PathwisePair &pair, std::span<const double> atom_weights,
                         const TimeGrid &grid, double alpha) {
  if (atom_weights.size() != pair.atoms)
    throw ConfigError("alpha_norm: weight count does not match the pair's atoms");
  const std::size_t m = pair.components, S = pair.steps, A = pair.atoms;
  return alpha_norm(
      pair.paths, S, m, atom_weights, grid, alpha,
      [&](std::size_t p, std::size_t j, std::size_t i) { return pair.y[(p * S + j) * m + i]; },
      [&](std::size_t p, std::size_t j, std::size_t i, std::size_t a) {
        return pair.v[((p * S + j) * m + i) * A + a];
      });
}

/// Jump surrogate v(e) = u(t_{j+1}, X_j + beta(t_j, X_j, e)) - u(t_{j+1}, X_j).
inline double jump_surrogate(const ValueFunction &vf, const PathBundle &bundle, std::size_t p,
                             std::size_t j, std::size_t i, std::size_t a) {
  const std::size_t k = bundle.state_dim();
  const auto x = bundle.state(p, j);
  std::array<double, kMaxStateDim> shift{}, moved{};
  bundle.coefficients().jump(bundle.grid().node(j), x, bundle.measure().mark(a),
                             std::span<double>(shift.data(), k));
  for (std::size_t c = 0; c < k; ++c)
    moved[c] = x[c] + shift[c];
  return vf.evaluate_step(j + 1, std::span<const double>(moved.data(), k), i) -
         vf.evaluate_step(j + 1, x, i);
}

/// The pair (Y, U) of a solution, with U through the jump surrogate.
inline PathwisePair pathwise_pair(const BsdeSolution &sol, const PathBundle &bundle) {
  PathwisePair pair;
  pair.paths = sol.paths;
  pair.steps = sol.steps;
  pair.components = sol.components;
  pair.atoms = bundle.measure().size();
  const std::size_t M = pair.paths, S = pair.steps, m = pair.components, A = pair.atoms;
  pair.y.resize(M * S * m);
  pair.v.resize(M * S * m * A);
  parallel_for(M, [&](std::size_t p) {
    for (std::size_t j = 0; j < S; ++j)
      for (std::size_t i = 0; i < m; ++i) {
        pair.y[(p * S + j) * m + i] = sol.y(p, j, i);
        for (std::size_t a = 0; a < A; ++a)
          pair.v[((p * S + j) * m + i) * A + a] =
              jump_surrogate(sol.value_function, bundle, p, j, i, a);
      }
  });
  return pair;
}

struct PicardDiagnostics {
  std::size_t iterations = 0;
  double alpha = 0.0;
  /// alpha-norm distance between iterate n and n-1 (n = 1, 2, ...).
  std::vector<double> deltas;
  /// sup distance of the value functions on the probe set.
  std::vector<double> sup_deltas;
  /// deltas[n] / deltas[n-1], defined from iteration 2 on.
  std::vector<double> ratios;
  bool converged = false;

  /// Median of the ratios from iteration 3 on (from 2 on if that is all there is).
  double median_ratio() const {
    std::vector<double> r;
    for (std::size_t n = 1; n < ratios.size(); ++n)
      if (std::isfinite(ratios[n]))
        r.push_back(ratios[n]);
    if (r.empty())
      for (double v : ratios)
        if (std::isfinite(v))
          r.push_back(v);
    if (r.empty())
      return std::numeric_limits<double>::quiet_NaN();
    std::sort(r.begin(), r.end());
    const std::size_t h = r.size() / 2;
    return r.size() % 2 ? r[h] : 0.5 * (r[h - 1] + r[h]);
  }
};

struct PicardOptions {
  /// Weight of the alpha-norm; NaN selects default_alpha().
  double alpha = std::numeric_limits<double>::quiet_NaN();
  double tol = 1e-8;
  std::size_t max_iter = 50;
  /// Starting point u^0; zero when absent.
  const ValueFunction *start = nullptr;
  BsdeOptions bsde;
  /// Paths whose states form the probe set of the sup-norm stopping test.
  std::size_t probe_paths = 64;
};

struct FixedPointResult {
  ValueFunction value_function;
  PicardDiagnostics diagnostics;
  BsdeSolution solution;
};

/// alpha = 2 C^2 (1 + lambda(E) C_beta^2).
inline double default_alpha(const DriverSpec &driver, const PathBundle &bundle) {
  const double c = driver.lipschitz_bound;
  const double cb = bundle.coefficients().lipschitz_bound;
  return 2.0 * c * c * (1.0 + bundle.measure().total_mass() * cb * cb);
}

/// One step of the fixed-point map: solve the frozen equation around u_prev.
inline ValueFunction iterate(const DriverSpec &driver, const PathBundle &bundle,
                             const ValueFunction &u_prev, const BsdeOptions &options = {}) {
  return solve_system(driver, bundle, &u_prev, options).value_function;
}

using InnerSolver = std::function<BsdeSolution(const ValueFunction &frozen)>;

namespace detail {

inline double value_sup_distance(const ValueFunction &a, const ValueFunction &b,
                                 const PathBundle &bundle, std::size_t probe_paths) {
  const std::size_t P = std::min(probe_paths, bundle.paths());
  double sup = 0.0;
  for (std::size_t j = 0; j <= bundle.steps(); ++j)
    for (std::size_t p = 0; p < P; ++p)
      for (std::size_t i = 0; i < a.components(); ++i)
        sup = std::max(sup, std::abs(a.evaluate_step(j, bundle.state(p, j), i) -
                                     b.evaluate_step(j, bundle.state(p, j), i)));
  return sup;
}

} // namespace detail

/**
 * Picard loop on the frozen nonlocal argument: u^n = Psi(u^{n-1}) with Psi
 * given by `inner`. Stops when both the alpha-norm distance of successive
 * pathwise pairs (Y, U) and the sup distance of the value functions on the
 * probe set fall below tol, or after max_iter iterations (converged = false).
 */
inline FixedPointResult picard_loop(const InnerSolver &inner, const PathBundle &bundle,
                                    std::size_t components, double alpha,
                                    const PicardOptions &options) {
  if (!(options.tol > 0.0))
    throw ConfigError("picard: tol must be > 0");
  if (options.max_iter == 0)
    throw ConfigError("picard: max_iter must be >= 1");
  const std::size_t M = bundle.paths(), N = bundle.steps(), m = components;
  const std::size_t A = bundle.measure().size();
  std::vector<double> weights(A);
  for (std::size_t a = 0; a < A; ++a)
    weights[a] = bundle.measure().weight(a);

  ValueFunction prev = options.start ? *options.start : ValueFunction::zero(bundle.grid(), m);
  // pathwise Y of the previous iterate; empty means "evaluate prev along the paths"
  std::vector<double> prev_y;

  FixedPointResult result;
  result.diagnostics.alpha = alpha;
  for (std::size_t n = 1; n <= options.max_iter; ++n) {
    BsdeSolution sol = inner(prev);
    const ValueFunction &cur = sol.value_function;
    const double delta = alpha_norm(
        M, N, m, weights, bundle.grid(), alpha,
        [&](std::size_t p, std::size_t j, std::size_t i) {
          const double before = prev_y.empty()
                                    ? prev.evaluate_step(j, bundle.state(p, j), i)
                                    : prev_y[(p * (N + 1) + j) * m + i];
          return sol.y(p, j, i) - before;
        },
        [&](std::size_t p, std::size_t j, std::size_t i, std::size_t a) {
          return jump_surrogate(cur, bundle, p, j, i, a) -
                 jump_surrogate(prev, bundle, p, j, i, a);
        });
    const double sup = detail::value_sup_distance(cur, prev, bundle, options.probe_paths);
    auto &diag = result.diagnostics;
    diag.iterations = n;
    if (!diag.deltas.empty())
      diag.ratios.push_back(diag.deltas.back() > 0.0
                                ? delta / diag.deltas.back()
                                : std::numeric_limits<double>::quiet_NaN());
    diag.deltas.push_back(delta);
    diag.sup_deltas.push_back(sup);
    prev = cur;
    prev_y = sol.Y;
    result.solution = std::move(sol);
    if (delta < options.tol && sup < options.tol) {
      diag.converged = true;
      break;
    }
  }
  result.value_function = prev;
  return result;
}

/// Fixed point of the frozen-argument map for the plain BSDE system.
inline FixedPointResult solve_fixed_point(const DriverSpec &driver, const PathBundle &bundle,
                                          const PicardOptions &options = {}) {
  const double alpha =
      std::isnan(options.alpha) ? default_alpha(driver, bundle) : options.alpha;
  return picard_loop(
      [&](const ValueFunction &frozen) {
        return solve_system(driver, bundle, &frozen, options.bsde);
      },
      bundle, driver.components, alpha, options);
}

} // namespace jumpflow
