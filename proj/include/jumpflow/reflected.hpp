#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jumpflow/bsde.hpp"
#include "jumpflow/error.hpp"
#include "jumpflow/forward.hpp"
#include "jumpflow/picard.hpp"

namespace jumpflow {

using ObstacleFn = std::function<double(double t, std::span<const double> x)>;

/// Which ordering of g and l(T, .) is enforced at the horizon.
enum class Compatibility {
  /// g(x) >= l(T, x), the ordering implied by Y_T = g and Y >= l.
  TerminalAboveObstacle,
  /// l(T, x) >= g(x), the reversed ordering, for experimentation.
  ObstacleAboveTerminal,
};

/// Lower obstacle l(t, x) of the reflected equation.
struct ObstacleSpec {
  ObstacleFn obstacle;
  Compatibility compatibility = Compatibility::TerminalAboveObstacle;

  double operator()(double t, std::span<const double> x) const { return obstacle(t, x); }

  /// Throws ConfigError when the compatibility ordering fails at a probe point.
  void check_compatibility(const TerminalFn &g, double horizon,
                           std::span<const std::vector<double>> probes) const {
    if (!obstacle)
      throw ConfigError("obstacle: no obstacle function");
    for (const auto &x : probes) {
      const double gv = g(0, x), lv = obstacle(horizon, x);
      const bool ok = compatibility == Compatibility::TerminalAboveObstacle ? gv >= lv : lv >= gv;
      if (!ok)
        throw ConfigError("obstacle: compatibility violated at x = " + std::to_string(x[0]) +
                          " (g = " + std::to_string(gv) + ", l(T) = " + std::to_string(lv) + ")");
    }
  }
};

enum class ReflectionMode {
  /// Y_j = max(yhat_j, l_j) (discrete Snell envelope).
  Max,
  /// Y_j = yhat_j + (dt / eps) (l_j - Y_j)^+ solved implicitly.
  Penalty,
};

struct ReflectionOptions {
  ReflectionMode mode = ReflectionMode::Max;
  double epsilon = 1e-3;
  BsdeOptions bsde;
};

/// BsdeSolution plus the nondecreasing process K[p][j], K[p][0] = 0.
struct ReflectedSolution {
  BsdeSolution base;
  std::vector<double> K;

  double k(std::size_t p, std::size_t j) const { return K[p * (base.steps + 1) + j]; }
  double dk(std::size_t p, std::size_t j) const { return k(p, j + 1) - k(p, j); }
};

namespace detail {

struct ReflectStep {
  const ObstacleSpec &obstacle;
  const TimeGrid &grid;
  ReflectionMode mode;
  double kappa;
  std::vector<double> &dk; // [p][j]
  std::size_t steps;
  // smallest obstacle value on the cloud at the current node; flat when the
  // obstacle takes a single value there
  double floor = -std::numeric_limits<double>::infinity();
  bool flat = true;

  template <class Sample> void begin_step(std::size_t j, std::size_t n, Sample &&x) {
    floor = std::numeric_limits<double>::infinity();
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < n; ++p) {
      const double l = obstacle(grid.node(j), x(p));
      floor = std::min(floor, l);
      top = std::max(top, l);
    }
    flat = !(top > floor);
  }

  // the obstacle joins the regression basis so the fit can follow its kink;
  // a flat obstacle would only repeat the intercept
  PolynomialBasis basis(std::size_t j, PolynomialBasis b) const {
    if (b.point_mass() || flat)
      return b;
    return b.with_feature(
        [l = obstacle.obstacle, t = grid.node(j)](std::span<const double> x) { return l(t, x); });
  }

  double penalized(double y_hat, double l) const {
    return y_hat < l ? (y_hat + kappa * l) / (1.0 + kappa) : y_hat;
  }

  double correct(std::size_t j, std::span<const double> x, double y) const {
    const double l = obstacle(grid.node(j), x);
    return mode == ReflectionMode::Max ? std::max(y, l) : penalized(y, l);
  }

  double finalize(std::size_t p, std::size_t j, std::span<const double> x, double y_hat,
                  double h_dt, double &target) const {
    const double l = obstacle(grid.node(j), x);
    const double y = mode == ReflectionMode::Max ? std::max(y_hat, l) : penalized(y_hat, l);
    dk[p * steps + j] = y - y_hat;
    // Paths sitting at the obstacle's floor never stop (the in-the-money rule
    // of Longstaff-Schwartz); elsewhere the pathwise target restarts from Y.
    if (y > y_hat && (flat || l > floor))
      target = y;
    else
      target += h_dt;
    return y;
  }
};

} // namespace detail

/**
 * Reflected BSDE with jumps above `obstacle`: the plain backward induction
 * with a per-node reflection, Y_j = max(yhat_j, l(t_j, X_j)) and
 * dK_j = Y_j - yhat_j (or the penalized variant).
 */
inline ReflectedSolution solve_reflected(const DriverSpec &driver, const ObstacleSpec &obstacle,
                                         const PathBundle &bundle,
                                         const ValueFunction *frozen_u = nullptr,
                                         const ReflectionOptions &options = {}) {
  if (driver.components != 1)
    throw ConfigError("solve_reflected: only scalar equations (m = 1) are supported");
  if (options.mode == ReflectionMode::Penalty && !(options.epsilon > 0.0))
    throw ConfigError("solve_reflected: penalty epsilon must be > 0");
  {
    std::vector<std::vector<double>> probes;
    const std::size_t P = std::min<std::size_t>(bundle.paths(), 1024);
    for (std::size_t p = 0; p < P; ++p) {
      auto s = bundle.state(p, bundle.steps());
      probes.emplace_back(s.begin(), s.end());
    }
    obstacle.check_compatibility(driver.g, bundle.grid().horizon, probes);
  }
  const std::size_t M = bundle.paths(), N = bundle.steps();
  std::vector<double> dk(M * N, 0.0);
  detail::ReflectStep step{obstacle, bundle.grid(), options.mode,
                           bundle.grid().dt() / options.epsilon, dk, N};
  ReflectedSolution out;
  out.base = detail::backward_induction(driver, bundle, frozen_u, options.bsde, step);
  out.K.assign(M * (N + 1), 0.0);
  for (std::size_t p = 0; p < M; ++p)
    for (std::size_t j = 0; j < N; ++j)
      out.K[p * (N + 1) + j + 1] = out.K[p * (N + 1) + j] + dk[p * N + j];
  return out;
}

/// Counts of nodes violating Y >= l, dK >= 0 and (Y - l) dK = 0.
struct SkorokhodReport {
  std::size_t below_obstacle = 0;
  std::size_t negative_increment = 0;
  std::size_t complementarity = 0;
  std::size_t nodes = 0;
  bool exact() const {
    return below_obstacle == 0 && negative_increment == 0 && complementarity == 0;
  }
};

inline SkorokhodReport skorokhod_check(const ReflectedSolution &sol, const ObstacleSpec &obstacle,
                                       const PathBundle &bundle) {
  SkorokhodReport r;
  const std::size_t N = sol.base.steps;
  for (std::size_t p = 0; p < sol.base.paths; ++p)
    for (std::size_t j = 0; j <= N; ++j) {
      ++r.nodes;
      const double l = obstacle(bundle.grid().node(j), bundle.state(p, j));
      const double y = sol.base.y(p, j, 0);
      if (j < N) {
        if (y < l)
          ++r.below_obstacle;
        const double dk = sol.dk(p, j);
        if (dk < 0.0)
          ++r.negative_increment;
        if ((y - l) * dk != 0.0)
          ++r.complementarity;
      }
    }
  return r;
}

/**
 * Path average of sum_j (Y_j - l(t_j, X_j)) dK_j. Max reflection makes every
 * term exactly zero; a nonzero value under Max mode raises an Error.
 */
inline double complementarity_residual(const ReflectedSolution &sol, const ObstacleSpec &obstacle,
                                       const PathBundle &bundle, bool expect_exact = true) {
  const std::size_t N = sol.base.steps;
  const double total = chunked_reduce(
      sol.base.paths, 0.0,
      [&](std::size_t begin, std::size_t end) {
        double acc = 0.0;
        for (std::size_t p = begin; p < end; ++p)
          for (std::size_t j = 0; j < N; ++j)
            acc += (sol.base.y(p, j, 0) - obstacle(bundle.grid().node(j), bundle.state(p, j))) *
                   sol.dk(p, j);
        return acc;
      },
      [](double a, double b) { return a + b; });
  const double r = total / static_cast<double>(sol.base.paths);
  if (expect_exact && r != 0.0)
    throw Error("complementarity residual is " + std::to_string(r) + ", expected exactly 0");
  return r;
}

/// Both sides of the discrete a priori estimate.
struct AprioriBound {
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio() const { return lhs == 0.0 ? 0.0 : lhs / rhs; }
};

/**
 * E[sup|Y|^2 + K_T^2 + sum (|Z|^2 + ||U||^2) dt] against
 * E[|g(X_T)|^2 + sup|l(s, X_s)|^2 + sum |h(s, X_s, 0, 0, 0)|^2 dt], with U
 * through the jump surrogate. K and l are omitted when absent.
 */
inline AprioriBound apriori_bound(const BsdeSolution &sol, const std::vector<double> *K,
                                  const DriverSpec &driver, const ObstacleSpec *obstacle,
                                  const PathBundle &bundle) {
  const std::size_t M = sol.paths, N = sol.steps, m = sol.components, d = sol.brownian_dim;
  const std::size_t A = bundle.measure().size();
  const double dt = bundle.grid().dt();
  struct Acc {
    double lhs = 0.0, rhs = 0.0;
  };
  const Acc acc = chunked_reduce(
      M, Acc{},
      [&](std::size_t begin, std::size_t end) {
        Acc r;
        std::vector<double> zero_y(m, 0.0), zero_z(d, 0.0);
        for (std::size_t p = begin; p < end; ++p) {
          double sup_y = 0.0, sup_l = 0.0, integral = 0.0, data_integral = 0.0;
          for (std::size_t j = 0; j <= N; ++j) {
            double y2 = 0.0;
            for (std::size_t i = 0; i < m; ++i)
              y2 += sol.y(p, j, i) * sol.y(p, j, i);
            sup_y = std::max(sup_y, y2);
            const auto x = bundle.state(p, j);
            const double t = bundle.grid().node(j);
            if (obstacle) {
              const double l = (*obstacle)(t, x);
              sup_l = std::max(sup_l, l * l);
            }
            if (j == N)
              break;
            for (std::size_t i = 0; i < m; ++i) {
              for (std::size_t l = 0; l < d; ++l)
                integral += sol.z(p, j, i, l) * sol.z(p, j, i, l) * dt;
              for (std::size_t a = 0; a < A; ++a) {
                const double u = jump_surrogate(sol.value_function, bundle, p, j, i, a);
                integral += bundle.measure().weight(a) * u * u * dt;
              }
              const double h0 = driver.h(i, t, x, zero_y, zero_z, 0.0);
              data_integral += h0 * h0 * dt;
            }
          }
          double g2 = 0.0;
          for (std::size_t i = 0; i < m; ++i) {
            const double g = driver.g(i, bundle.state(p, N));
            g2 += g * g;
          }
          const double kT = K ? (*K)[p * (N + 1) + N] : 0.0;
          r.lhs += sup_y + kT * kT + integral;
          r.rhs += g2 + sup_l + data_integral;
        }
        return r;
      },
      [](Acc a, const Acc &b) {
        a.lhs += b.lhs;
        a.rhs += b.rhs;
        return a;
      });
  AprioriBound out{acc.lhs / static_cast<double>(M), acc.rhs / static_cast<double>(M)};
  if (out.rhs == 0.0 && out.lhs != 0.0)
    throw BoundError("a priori bound: data vanish but the solution does not");
  return out;
}

inline double apriori_bound_ratio(const ReflectedSolution &sol, const DriverSpec &driver,
                                  const ObstacleSpec &obstacle, const PathBundle &bundle) {
  return apriori_bound(sol.base, &sol.K, driver, &obstacle, bundle).ratio();
}

inline double apriori_bound_ratio(const BsdeSolution &sol, const DriverSpec &driver,
                                  const PathBundle &bundle) {
  return apriori_bound(sol, nullptr, driver, nullptr, bundle).ratio();
}

/// Result of the Picard loop with the reflected inner solver.
struct ReflectedFixedPoint {
  FixedPointResult fixed_point;
  ReflectedSolution solution;
};

/// Picard loop on the frozen nonlocal argument with solve_reflected inside.
inline ReflectedFixedPoint solve_reflected_fixed_point(const DriverSpec &driver,
                                                       const ObstacleSpec &obstacle,
                                                       const PathBundle &bundle,
                                                       const PicardOptions &picard = {},
                                                       ReflectionOptions reflection = {}) {
  reflection.bsde = picard.bsde;
  const double alpha = std::isnan(picard.alpha) ? default_alpha(driver, bundle) : picard.alpha;
  ReflectedFixedPoint out;
  out.fixed_point = picard_loop(
      [&](const ValueFunction &frozen) {
        out.solution = solve_reflected(driver, obstacle, bundle, &frozen, reflection);
        return out.solution.base;
      },
      bundle, 1, alpha, picard);
  return out;
}

} // namespace jumpflow
