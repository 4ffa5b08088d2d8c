#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "jumpflow/error.hpp"
#include "jumpflow/nonlocal.hpp"
#include "jumpflow/problem.hpp"
#include "jumpflow/value_function.hpp"

namespace jumpflow {

/// Uniform 1-D grid; values outside are extrapolated linearly.
struct SpatialGrid {
  double x_min = -1.0;
  double x_max = 1.0;
  std::size_t nodes = 3;

  SpatialGrid() = default;
  SpatialGrid(double lo, double hi, std::size_t n) : x_min(lo), x_max(hi), nodes(n) {
    if (!(lo < hi))
      throw ConfigError("spatial grid: x_min must be below x_max");
    if (n < 3)
      throw ConfigError("spatial grid: at least 3 nodes are required");
  }

  double dx() const noexcept { return (x_max - x_min) / static_cast<double>(nodes - 1); }
  double x(std::size_t n) const noexcept {
    return n + 1 == nodes ? x_max : x_min + static_cast<double>(n) * dx();
  }

  /// x0 +- 6 standard deviations of X_T - x0, from the coefficients at (t0, x0).
  static SpatialGrid around(const ProblemSpec &problem, double x0, std::size_t nodes) {
    const std::vector<double> x{x0};
    std::vector<double> sigma(problem.coefficients.state_dim * problem.coefficients.brownian_dim);
    problem.coefficients.diffusion(problem.t_start, x, sigma);
    double var = 0.0;
    for (double s : sigma)
      var += s * s;
    for (std::size_t a = 0; a < problem.measure.size(); ++a) {
      double b = 0.0;
      problem.coefficients.jump(problem.t_start, x, problem.measure.mark(a),
                                std::span<double>(&b, 1));
      var += problem.measure.weight(a) * b * b;
    }
    double sd = std::sqrt(var * (problem.horizon - problem.t_start));
    if (!(sd > 0.0))
      sd = 1.0;
    return SpatialGrid(x0 - 6.0 * sd, x0 + 6.0 * sd, nodes);
  }
};

/// How B u sees the grid function.
enum class NonlocalVariant {
  /// B evaluated on the piecewise-linear interpolant of the solution itself.
  Solution,
  /// B evaluated on a C^1 cubic Hermite test-function interpolant.
  TestFunction,
};

struct OracleOptions {
  NonlocalVariant variant = NonlocalVariant::Solution;
};

/// values[i][n][node] at times t_n of `time` and nodes of `grid`.
struct GridSolution {
  SpatialGrid grid;
  TimeGrid time;
  std::size_t components = 1;
  std::vector<double> values;

  std::span<const double> row(std::size_t i, std::size_t n) const {
    return {values.data() + (i * (time.steps + 1) + n) * grid.nodes, grid.nodes};
  }
  std::span<double> row(std::size_t i, std::size_t n) {
    return {values.data() + (i * (time.steps + 1) + n) * grid.nodes, grid.nodes};
  }

  /// Nearest time node, linear interpolation (and extrapolation) in space.
  double evaluate(double t, double x, std::size_t i = 0) const;
};

namespace detail {

/// Piecewise-linear interpolant with linear extrapolation beyond the ends.
inline double interp_linear(std::span<const double> v, const SpatialGrid &g, double x) {
  const double s = (x - g.x_min) / g.dx();
  const auto last = static_cast<double>(g.nodes - 2);
  const double cell = std::clamp(std::floor(s), 0.0, last);
  const auto n = static_cast<std::size_t>(cell);
  const double w = s - cell;
  return v[n] + w * (v[n + 1] - v[n]);
}

inline double slope_at(std::span<const double> v, const SpatialGrid &g, std::size_t n) {
  if (n == 0)
    return (v[1] - v[0]) / g.dx();
  if (n + 1 == g.nodes)
    return (v[n] - v[n - 1]) / g.dx();
  return (v[n + 1] - v[n - 1]) / (2.0 * g.dx());
}

/// C^1 cubic Hermite interpolant with central-difference slopes.
inline double interp_cubic(std::span<const double> v, const SpatialGrid &g, double x) {
  const double s = (x - g.x_min) / g.dx();
  if (s <= 0.0 || s >= static_cast<double>(g.nodes - 1))
    return interp_linear(v, g, x);
  const auto n = static_cast<std::size_t>(std::floor(s));
  const double w = s - static_cast<double>(n);
  const double h = g.dx();
  const double m0 = slope_at(v, g, n) * h, m1 = slope_at(v, g, n + 1) * h;
  const double w2 = w * w, w3 = w2 * w;
  return (2 * w3 - 3 * w2 + 1) * v[n] + (w3 - 2 * w2 + w) * m0 + (-2 * w3 + 3 * w2) * v[n + 1] +
         (w3 - w2) * m1;
}

/// Thomas algorithm; sub/diag/sup have the system size (sub[0], sup[n-1] unused).
inline void solve_tridiagonal(std::vector<double> &sub, std::vector<double> &diag,
                              std::vector<double> &sup, std::vector<double> &rhs) {
  const std::size_t n = diag.size();
  for (std::size_t r = 1; r < n; ++r) {
    const double f = sub[r] / diag[r - 1];
    diag[r] -= f * sup[r - 1];
    rhs[r] -= f * rhs[r - 1];
  }
  rhs[n - 1] /= diag[n - 1];
  for (std::size_t r = n - 1; r-- > 0;)
    rhs[r] = (rhs[r] - sup[r] * rhs[r + 1]) / diag[r];
}

inline GridSolution solve_grid(const ProblemSpec &problem, const ObstacleSpec *obstacle,
                               const SpatialGrid &grid, std::size_t time_steps,
                               const OracleOptions &options) {
  const auto &co = problem.coefficients;
  const auto &dr = problem.driver;
  const auto &measure = problem.measure;
  if (co.state_dim != 1 || co.brownian_dim != 1)
    throw ConfigError("oracle: only one-dimensional problems (k = d = 1) are supported");
  if (obstacle && dr.components != 1)
    throw ConfigError("oracle: obstacle problems must be scalar");
  const std::size_t m = dr.components;
  const std::size_t J = grid.nodes;
  const std::size_t A = measure.size();
  const TimeGrid time(problem.t_start, problem.horizon, time_steps);
  const double dt = time.dt();
  const double dx = grid.dx();

  // explicit nonlocal part must be stable
  double gamma_max = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t n = 0; n < J; ++n)
      for (std::size_t a = 0; a < A; ++a) {
        const double x = grid.x(n);
        gamma_max = std::max(gamma_max, std::abs(dr.weights(i, problem.t_start,
                                                            std::span<const double>(&x, 1),
                                                            measure.mark(a))));
      }
  const double lh = dr.lipschitz_bound;
  const double cfl = dt * (measure.total_mass() * (1.0 + gamma_max) * lh + lh);
  if (cfl > 1.0)
    throw ConfigError("oracle: explicit nonlocal step is unstable (dt * (lambda(E) (1 + |gamma|) "
                      "L_h + L_h) = " +
                      std::to_string(cfl) + " > 1); increase time_steps");

  GridSolution out;
  out.grid = grid;
  out.time = time;
  out.components = m;
  out.values.assign(m * (time_steps + 1) * J, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    auto last = out.row(i, time_steps);
    for (std::size_t n = 0; n < J; ++n) {
      const double x = grid.x(n);
      last[n] = dr.g(i, std::span<const double>(&x, 1));
    }
  }

  // jump sizes per node and atom are evaluated on the fly (they may depend on t)
  std::vector<double> expl(m * J), sub(J - 2), diag(J - 2), sup(J - 2), rhs(J - 2);
  std::vector<double> ybar(m);
  for (std::size_t step = time_steps; step-- > 0;) {
    const double t_new = time.node(step);
    const double t_old = time.node(step + 1);
    // explicit part E = K u + h(., u, sigma u_x, B u) at the known level
    for (std::size_t n = 0; n < J; ++n) {
      const double x = grid.x(n);
      const std::span<const double> xs(&x, 1);
      double sigma = 0.0;
      co.diffusion(t_old, xs, std::span<double>(&sigma, 1));
      for (std::size_t i = 0; i < m; ++i)
        ybar[i] = out.row(i, step + 1)[n];
      for (std::size_t i = 0; i < m; ++i) {
        const auto u = out.row(i, step + 1);
        const double ux = slope_at(u, grid, n);
        double ku = 0.0, bu = 0.0;
        for (std::size_t a = 0; a < A; ++a) {
          double beta = 0.0;
          co.jump(t_old, xs, measure.mark(a), std::span<double>(&beta, 1));
          const double shifted = interp_linear(u, grid, x + beta);
          ku += measure.weight(a) * (shifted - u[n] - beta * ux);
          const double shifted_b = options.variant == NonlocalVariant::Solution
                                       ? shifted
                                       : interp_cubic(u, grid, x + beta);
          bu += measure.weight(a) * dr.weights(i, t_old, xs, measure.mark(a)) * (shifted_b - u[n]);
        }
        const double z = sigma * ux;
        const double hv = dr.h(i, t_old, xs, ybar, std::span<const double>(&z, 1), bu);
        expl[i * J + n] = ku + hv;
      }
    }
    for (std::size_t i = 0; i < m; ++i) {
      const auto u_old = out.row(i, step + 1);
      auto u_new = out.row(i, step);
      // boundary nodes: zero curvature, explicit one-sided drift
      for (std::size_t n : {std::size_t{0}, J - 1}) {
        const double x = grid.x(n);
        double b = 0.0;
        co.drift(t_old, std::span<const double>(&x, 1), std::span<double>(&b, 1));
        u_new[n] = u_old[n] + dt * (b * slope_at(u_old, grid, n) + expl[i * J + n]);
      }
      for (std::size_t n = 1; n + 1 < J; ++n) {
        const double x = grid.x(n);
        const std::span<const double> xs(&x, 1);
        double b = 0.0, sigma = 0.0;
        co.drift(t_new, xs, std::span<double>(&b, 1));
        co.diffusion(t_new, xs, std::span<double>(&sigma, 1));
        const double diff = 0.5 * sigma * sigma / (dx * dx);
        double lo = diff, hi = diff;
        if (std::abs(b) * dx <= sigma * sigma) {
          lo -= b / (2.0 * dx);
          hi += b / (2.0 * dx);
        } else if (b > 0.0) {
          hi += b / dx;
        } else {
          lo -= b / dx;
        }
        const std::size_t r = n - 1;
        sub[r] = -dt * lo;
        sup[r] = -dt * hi;
        diag[r] = 1.0 + dt * (lo + hi);
        rhs[r] = u_old[n] + dt * expl[i * J + n];
      }
      rhs.front() -= sub.front() * u_new[0];
      rhs.back() -= sup.back() * u_new[J - 1];
      solve_tridiagonal(sub, diag, sup, rhs);
      for (std::size_t n = 1; n + 1 < J; ++n)
        u_new[n] = rhs[n - 1];
      if (obstacle)
        for (std::size_t n = 0; n < J; ++n) {
          const double x = grid.x(n);
          u_new[n] = std::max(u_new[n], (*obstacle)(t_new, std::span<const double>(&x, 1)));
        }
      for (std::size_t n = 0; n < J; ++n)
        if (!std::isfinite(u_new[n]))
          throw EvaluationError("oracle: non-finite value at time step " + std::to_string(step));
    }
  }
  return out;
}

} // namespace detail

inline double GridSolution::evaluate(double t, double x, std::size_t i) const {
  return detail::interp_linear(row(i, time.nearest(t)), grid, x);
}

/**
 * IMEX finite differences for the nonlocal PDE: the local operator
 * -d_t - b d_x - sigma^2/2 d_xx implicitly (tridiagonal), K u and
 * h(., u, sigma u_x, B u) explicitly at the previous level.
 */
inline GridSolution solve_pide(const ProblemSpec &problem, const SpatialGrid &grid,
                               std::size_t time_steps, const OracleOptions &options = {}) {
  return detail::solve_grid(problem, nullptr, grid, time_steps, options);
}

/// As solve_pide, with values projected onto max(values, l(t_n, .)) after each step.
inline GridSolution solve_pide_obstacle(const ProblemSpec &problem, const ObstacleSpec &obstacle,
                                        const SpatialGrid &grid, std::size_t time_steps,
                                        const OracleOptions &options = {}) {
  return detail::solve_grid(problem, &obstacle, grid, time_steps, options);
}

/// Solves with or without the problem's own obstacle.
inline GridSolution solve_oracle(const ProblemSpec &problem, const SpatialGrid &grid,
                                 std::size_t time_steps, const OracleOptions &options = {}) {
  return problem.obstacle ? solve_pide_obstacle(problem, *problem.obstacle, grid, time_steps, options)
                          : solve_pide(problem, grid, time_steps, options);
}

struct ProbePoint {
  double t = 0.0;
  std::vector<double> x;
  std::size_t component = 0;
};

struct ProbeComparison {
  ProbePoint probe;
  double value = 0.0;
  double reference = 0.0;
  double abs_error = 0.0;
  double rel_error = 0.0;
};

struct ErrorReport {
  double max_rel = 0.0;
  double rms_rel = 0.0;
  double max_abs = 0.0;
  std::vector<ProbeComparison> rows;
};

/// Relative errors use max(|reference|, 1e-12) in the denominator.
inline void add_comparison(ErrorReport &report, const ProbePoint &probe, double value,
                           double reference) {
  ProbeComparison row{probe, value, reference, std::abs(value - reference), 0.0};
  row.rel_error = row.abs_error / std::max(std::abs(reference), 1e-12);
  report.rows.push_back(row);
  report.max_rel = std::max(report.max_rel, row.rel_error);
  report.max_abs = std::max(report.max_abs, row.abs_error);
  double s = 0.0;
  for (const auto &r : report.rows)
    s += r.rel_error * r.rel_error;
  report.rms_rel = std::sqrt(s / static_cast<double>(report.rows.size()));
}

/// Compares a value function with the grid solution at the probes.
inline ErrorReport compare(const ValueFunction &vf, const GridSolution &gs,
                           std::span<const ProbePoint> probes) {
  ErrorReport report;
  for (const auto &p : probes)
    add_comparison(report, p, vf.evaluate(p.t, p.x, p.component),
                   gs.evaluate(p.t, p.x.at(0), p.component));
  return report;
}

/// Two-resolution self-refinement of the oracle at (t_start, x0).
struct RefinementStudy {
  double coarse = 0.0;
  double fine = 0.0;
  /// 2 fine - coarse (first-order extrapolation).
  double richardson = 0.0;
  /// |fine - coarse| / |fine|, the oracle's error bar.
  double error_bar = 0.0;
  /// The fine-resolution grid solution.
  GridSolution solution;
};

inline RefinementStudy refinement_study(const ProblemSpec &problem, double x0, std::size_t nodes,
                                        std::size_t time_steps, const OracleOptions &options = {},
                                        std::size_t component = 0) {
  const auto fine_grid = SpatialGrid::around(problem, x0, nodes);
  const SpatialGrid coarse_grid(fine_grid.x_min, fine_grid.x_max, (nodes - 1) / 2 + 1);
  auto fine = solve_oracle(problem, fine_grid, time_steps, options);
  const auto coarse = solve_oracle(problem, coarse_grid, std::max<std::size_t>(1, time_steps / 2),
                                   options);
  RefinementStudy r;
  r.fine = fine.evaluate(problem.t_start, x0, component);
  r.coarse = coarse.evaluate(problem.t_start, x0, component);
  r.richardson = 2.0 * r.fine - r.coarse;
  r.error_bar = std::abs(r.fine - r.coarse) / std::max(std::abs(r.fine), 1e-12);
  r.solution = std::move(fine);
  return r;
}

/**
 * CSV matrix of component i: header "t,x_0,...", then one row per kept time
 * node. Every `time_stride`-th node is written, plus t_start.
 */
inline void write_csv(const GridSolution &gs, std::ostream &out, std::size_t component = 0,
                      std::size_t time_stride = 1) {
  if (component >= gs.components)
    throw ConfigError("grid csv: component out of range");
  time_stride = std::max<std::size_t>(1, time_stride);
  const auto old_precision = out.precision(17);
  out << "t";
  for (std::size_t n = 0; n < gs.grid.nodes; ++n)
    out << ',' << gs.grid.x(n);
  out << '\n';
  for (std::size_t k = gs.time.steps + 1; k-- > 0;) {
    if (k % time_stride != 0 && k != 0)
      continue;
    out << gs.time.node(k);
    for (double v : gs.row(component, k))
      out << ',' << v;
    out << '\n';
  }
  out.precision(old_precision);
}

} // namespace jumpflow
