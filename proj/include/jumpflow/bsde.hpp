#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "jumpflow/error.hpp"
#include "jumpflow/forward.hpp"
#include "jumpflow/nonlocal.hpp"
#include "jumpflow/parallel.hpp"
#include "jumpflow/regression.hpp"
#include "jumpflow/value_function.hpp"

namespace jumpflow {

/// h_i(t, x, y, z, q): y is the full vector (y^1..y^m), z the d-vector of
/// component i and q = int zeta gamma_i dlambda the scalar nonlocal argument.
using DriverFn = std::function<double(std::size_t i, double t, std::span<const double> x,
                                      std::span<const double> y, std::span<const double> z,
                                      double q)>;

/**
 * Driver in structure form f_i(t,x,y,z,zeta) = h_i(t,x,y,z, int zeta gamma_i dlambda)
 * with terminal values g_i. No monotonicity in q and no sign on gamma_i is
 * assumed.
 */
struct DriverSpec {
  std::size_t components = 1;
  DriverFn h;
  TerminalFn g;
  WeightFamily weights;
  double lipschitz_bound = 1.0;

  void validate() const {
    if (components == 0)
      throw ConfigError("driver: at least one component is required");
    if (!h || !g || !weights.gamma)
      throw ConfigError("driver: h, g and gamma are required");
    if (weights.components != components)
      throw ConfigError("driver: weight family has wrong component count");
  }

  /**
   * Sampled Lipschitz quotient of h_i in (y, z, q) around the given points,
   * using unit perturbations of each argument. Compare with lipschitz_bound.
   */
  double lipschitz_estimate(double t, std::span<const std::vector<double>> points,
                            std::size_t brownian_dim) const {
    double worst = 0.0;
    std::vector<double> y(components, 0.0), z(brownian_dim, 0.0);
    for (std::size_t i = 0; i < components; ++i)
      for (const auto &x : points) {
        const double base = h(i, t, x, y, z, 0.0);
        for (std::size_t c = 0; c < components; ++c) {
          y[c] = 1.0;
          worst = std::max(worst, std::abs(h(i, t, x, y, z, 0.0) - base));
          y[c] = 0.0;
        }
        for (std::size_t l = 0; l < brownian_dim; ++l) {
          z[l] = 1.0;
          worst = std::max(worst, std::abs(h(i, t, x, y, z, 0.0) - base));
          z[l] = 0.0;
        }
        worst = std::max(worst, std::abs(h(i, t, x, y, z, 1.0) - base));
      }
    return worst;
  }

  /// True when q -> h_i(t,x,y,z,q) is sampled nondecreasing on [-1, 1].
  bool nondecreasing_in_q(double t, std::span<const std::vector<double>> points,
                          std::size_t brownian_dim) const {
    std::vector<double> y(components, 0.0), z(brownian_dim, 0.0);
    for (std::size_t i = 0; i < components; ++i)
      for (const auto &x : points)
        for (int n = -10; n < 10; ++n)
          if (h(i, t, x, y, z, 0.1 * (n + 1)) < h(i, t, x, y, z, 0.1 * n))
            return false;
    return true;
  }
};

struct BsdeOptions {
  /// Total degree of the regression basis.
  int degree = 3;
  /// When false the nonlocal argument is forced to zero (classical BSDE).
  bool jump_logic = true;
  /// Append the terminal functions g_i to the regression basis.
  bool terminal_feature = true;
};

struct StepDiagnostics {
  /// RMS of (target - fit) of the conditional expectation, averaged over components.
  double residual_rms = 0.0;
  /// Spectral condition number of the regularized Gram matrix.
  double condition = 1.0;
};

/**
 * Discrete solution on the bundle's grid.
 * Y is [path][node][component] over nodes 0..N; Z is [path][step][component][l]
 * and Gamma (the q fed to h) is [path][step][component] over steps 0..N-1.
 */
struct BsdeSolution {
  std::size_t paths = 0;
  std::size_t steps = 0;
  std::size_t components = 0;
  std::size_t brownian_dim = 0;
  std::vector<double> Y;
  std::vector<double> Z;
  std::vector<double> Gamma;
  ValueFunction value_function;
  /// u^i(t_0, x_0) and its Monte-Carlo standard error.
  std::vector<double> value0;
  std::vector<double> std_error0;
  std::vector<StepDiagnostics> diagnostics;

  double y(std::size_t p, std::size_t j, std::size_t i) const {
    return Y[(p * (steps + 1) + j) * components + i];
  }
  double z(std::size_t p, std::size_t j, std::size_t i, std::size_t l) const {
    return Z[((p * steps + j) * components + i) * brownian_dim + l];
  }
  double gamma(std::size_t p, std::size_t j, std::size_t i) const {
    return Gamma[(p * steps + j) * components + i];
  }
};

namespace detail {

/// Unreflected step: Y_j = E_j[target] + h dt, target accumulates h dt.
struct PlainStep {
  template <class Sample> void begin_step(std::size_t, std::size_t, Sample &&) {}
  PolynomialBasis basis(std::size_t, PolynomialBasis b) const { return b; }
  double correct(std::size_t, std::span<const double>, double y) const { return y; }
  double finalize(std::size_t, std::size_t, std::span<const double>, double y_hat,
                  double h_dt, double &target) const {
    target += h_dt;
    return y_hat;
  }
};

/**
 * Backward induction shared by the plain and the reflected solvers.
 *
 * Per node j = N-1..0 and component i:
 *   E     = projection of the pathwise target on the basis of X_j
 *   Z     = projection of (target - E) dB_j / dt
 *   q     = B_i u at (t_j, X_j), u = frozen_u (frozen mode) or the fit at j+1
 *   ybar  = fits at j+1 (predictor), then the predicted Y_j (one correction)
 *   Y_j   = E + h(t_j, X_j, ybar, Z, q) dt, passed through the step policy.
 * The pathwise target is g(X_N) plus the accumulated driver increments.
 */
template <class Step>
BsdeSolution backward_induction(const DriverSpec &driver, const PathBundle &bundle,
                                const ValueFunction *frozen_u, const BsdeOptions &options,
                                Step &step) {
  driver.validate();
  const std::size_t M = bundle.paths();
  const std::size_t N = bundle.steps();
  const std::size_t m = driver.components;
  const std::size_t k = bundle.state_dim();
  const std::size_t d = bundle.brownian_dim();
  const TimeGrid &grid = bundle.grid();
  const double dt = grid.dt();
  const LevyMeasure &measure = bundle.measure();
  const CoefficientSet &coeffs = bundle.coefficients();
  const bool jumps_on = options.jump_logic && !measure.empty();
  if (frozen_u && frozen_u->components() != m)
    throw ConfigError("solve: frozen value function has wrong component count");

  BsdeSolution sol;
  sol.paths = M;
  sol.steps = N;
  sol.components = m;
  sol.brownian_dim = d;
  sol.Y.assign(M * (N + 1) * m, 0.0);
  sol.Z.assign(M * N * m * d, 0.0);
  sol.Gamma.assign(M * N * m, 0.0);
  sol.value_function = ValueFunction(grid, m, driver.g);
  sol.value0.assign(m, 0.0);
  sol.std_error0.assign(m, 0.0);
  sol.diagnostics.assign(N, StepDiagnostics{});

  std::vector<double> target(M * m);
  parallel_for(M, [&](std::size_t p) {
    const auto xN = bundle.state(p, N);
    for (std::size_t i = 0; i < m; ++i) {
      const double v = driver.g(i, xN);
      if (!std::isfinite(v))
        throw EvaluationError("solve: terminal value is not finite on path " +
                              std::to_string(p));
      target[p * m + i] = v;
      sol.Y[(p * (N + 1) + N) * m + i] = v;
    }
  });

  std::vector<double> cond_coef(0), fitted(M * m), zfit(M * m * d), qval(M * m);
  std::vector<std::vector<double>> e_coef(m), z_coef(m * d);

  for (std::size_t j = N; j-- > 0;) {
    const double t = grid.node(j);
    auto state_j = [&](std::size_t p) { return bundle.state(p, j); };
    step.begin_step(j, M, state_j);
    PolynomialBasis basis = PolynomialBasis::fitted(k, options.degree, M, state_j);
    if (options.terminal_feature && !basis.point_mass())
      for (std::size_t i = 0; i < m; ++i)
        basis = basis.with_feature(
            [g = driver.g, i](std::span<const double> x) { return g(i, x); });
    Projector proj(step.basis(j, std::move(basis)), M, state_j);
    const ValueFunction &vf = sol.value_function;

    // conditional expectations and Z
    for (std::size_t i = 0; i < m; ++i)
      e_coef[i] = proj.project([&](std::size_t p) { return target[p * m + i]; });
    parallel_for(M, [&](std::size_t p) {
      for (std::size_t i = 0; i < m; ++i)
        fitted[p * m + i] = proj.fitted(p, e_coef[i]);
    });
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t l = 0; l < d; ++l)
        z_coef[i * d + l] = proj.project([&](std::size_t p) {
          return (target[p * m + i] - fitted[p * m + i]) * bundle.increment(p, j)[l] / dt;
        });

    if (j == 0) {
      for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0, s2 = 0.0;
        for (std::size_t p = 0; p < M; ++p) {
          const double r = target[p * m + i] - fitted[p * m + i];
          s += r;
          s2 += r * r;
        }
        const double mean = s / static_cast<double>(M);
        const double var = std::max(0.0, s2 / static_cast<double>(M) - mean * mean);
        sol.std_error0[i] = std::sqrt(var / static_cast<double>(M));
      }
    }

    const std::size_t frozen_node = frozen_u ? frozen_u->grid().nearest(t) : 0;
    const double resid = chunked_reduce(
        M, 0.0,
        [&](std::size_t begin, std::size_t end) {
          double acc = 0.0;
          std::array<double, kMaxStateDim> ybar{};
          std::array<double, kMaxStateDim> ypred{};
          std::array<double, kMaxStateDim> zbuf{};
          for (std::size_t p = begin; p < end; ++p) {
            const auto x = bundle.state(p, j);
            for (std::size_t i = 0; i < m; ++i) {
              acc += (target[p * m + i] - fitted[p * m + i]) *
                     (target[p * m + i] - fitted[p * m + i]);
              for (std::size_t l = 0; l < d; ++l) {
                const double zv = proj.fitted(p, z_coef[i * d + l]);
                zfit[(p * m + i) * d + l] = zv;
              }
              double q = 0.0;
              if (jumps_on) {
                auto gamma_i = [&](double tt, std::span<const double> xx,
                                   std::span<const double> e) {
                  return driver.weights(i, tt, xx, e);
                };
                if (frozen_u) {
                  q = op_B([&](double, std::span<const double> xx) {
                             return frozen_u->evaluate_step(frozen_node, xx, i);
                           },
                           gamma_i, coeffs.jump, measure, t, x);
                } else {
                  q = op_B([&](double, std::span<const double> xx) {
                             return vf.evaluate_step(j + 1, xx, i);
                           },
                           gamma_i, coeffs.jump, measure, t, x);
                }
              }
              qval[p * m + i] = q;
              ybar[i] = vf.evaluate_step(j + 1, x, i);
            }
            // predictor with the fits at j+1, one correction with the predicted Y_j
            for (std::size_t i = 0; i < m; ++i) {
              std::copy_n(zfit.begin() + static_cast<std::ptrdiff_t>((p * m + i) * d), d,
                          zbuf.begin());
              const double hv = driver.h(i, t, x, std::span<const double>(ybar.data(), m),
                                         std::span<const double>(zbuf.data(), d),
                                         qval[p * m + i]);
              ypred[i] = step.correct(j, x, fitted[p * m + i] + hv * dt);
            }
            for (std::size_t i = 0; i < m; ++i) {
              std::copy_n(zfit.begin() + static_cast<std::ptrdiff_t>((p * m + i) * d), d,
                          zbuf.begin());
              const double hv = driver.h(i, t, x, std::span<const double>(ypred.data(), m),
                                         std::span<const double>(zbuf.data(), d),
                                         qval[p * m + i]);
              if (!std::isfinite(hv))
                throw EvaluationError("solve: driver is not finite on path " +
                                      std::to_string(p) + " at step " + std::to_string(j));
              const double y = step.finalize(p, j, x, fitted[p * m + i] + hv * dt, hv * dt,
                                             target[p * m + i]);
              sol.Y[(p * (N + 1) + j) * m + i] = y;
              sol.Gamma[(p * N + j) * m + i] = qval[p * m + i];
              for (std::size_t l = 0; l < d; ++l)
                sol.Z[((p * N + j) * m + i) * d + l] = zfit[(p * m + i) * d + l];
            }
          }
          return acc;
        },
        [](double a, double b) { return a + b; });

    StepFit fit{proj.basis(), {}, false, {}};
    for (std::size_t i = 0; i < m; ++i)
      fit.coefficients.push_back(
          proj.project([&](std::size_t p) { return sol.Y[(p * (N + 1) + j) * m + i]; }));
    sol.value_function.set_step(j, std::move(fit));
    sol.diagnostics[j].residual_rms =
        std::sqrt(resid / static_cast<double>(M * m));
    sol.diagnostics[j].condition = proj.condition();
  }

  const auto x0 = bundle.start();
  for (std::size_t i = 0; i < m; ++i)
    sol.value0[i] = sol.value_function.evaluate_step(0, x0, i);
  return sol;
}

} // namespace detail

/**
 * Regression Monte-Carlo solution of the m-dimensional BSDE with jumps.
 * With frozen_u the nonlocal argument is built from frozen_u (the frozen
 * equation of the fixed-point construction); otherwise from the solver's own
 * fit at the next node.
 */
inline BsdeSolution solve_system(const DriverSpec &driver, const PathBundle &bundle,
                                 const ValueFunction *frozen_u = nullptr,
                                 const BsdeOptions &options = {}) {
  detail::PlainStep step;
  return detail::backward_induction(driver, bundle, frozen_u, options, step);
}

/**
 * Relative L2(dP x dt x dlambda) gap between the directly regressed jump
 * integrand U_direct(e) (jump-conditioned increment of Y over step j, from one
 * regression of Y_{j+1} on phi(X_j) and phi(X_j) * N_e) and the surrogate
 * u(t_{j+1}, X_j + beta) - u(t_{j+1}, X_j) built from the fitted value function.
 * One entry per component; 0 when the measure is empty.
 */
enum class JumpEstimator {
  Conditioned, // one regression on [phi, phi * N_a]
  Compensated  // per atom, Y_{j+1} (N_a - w dt) / (w dt) on phi; much noisier
};

inline std::vector<double> jump_residual(const BsdeSolution &solution, const PathBundle &bundle,
                                         int degree = 3,
                                         JumpEstimator estimator = JumpEstimator::Conditioned) {
  const std::size_t m = solution.components;
  const std::size_t M = bundle.paths();
  const std::size_t N = bundle.steps();
  const std::size_t k = bundle.state_dim();
  const LevyMeasure &measure = bundle.measure();
  std::vector<double> out(m, 0.0);
  if (measure.empty())
    return out;
  const std::size_t A = measure.size();
  const ValueFunction &vf = solution.value_function;
  const CoefficientSet &coeffs = bundle.coefficients();

  std::vector<double> num(m, 0.0), den(m, 0.0);
  for (std::size_t j = 0; j < N; ++j) {
    const double t = bundle.grid().node(j);
    auto state_j = [&](std::size_t p) { return bundle.state(p, j); };
    const PolynomialBasis basis = PolynomialBasis::fitted(k, degree, M, state_j);
    const std::size_t B = basis.size();
    const bool conditioned = estimator == JumpEstimator::Conditioned;
    const double dt = bundle.grid().dt();
    // design [phi(X_j), phi(X_j) 1{atom a fired in step j}, ...]; the atom blocks
    // estimate E[Y_{j+1} | X_j, jump a] - E[Y_{j+1} | X_j, no jump]
    Eigen::MatrixXd design = Eigen::MatrixXd::Zero(
        static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(conditioned ? B * (A + 1) : B));
    for_each_chunk(M, [&](std::size_t, std::size_t begin, std::size_t end) {
      std::vector<double> phi(B);
      for (std::size_t p = begin; p < end; ++p) {
        basis.evaluate(bundle.state(p, j), phi);
        const auto row = static_cast<Eigen::Index>(p);
        for (std::size_t b = 0; b < B; ++b)
          design(row, static_cast<Eigen::Index>(b)) = phi[b];
        if (!conditioned)
          continue;
        for (const auto &jr : bundle.jumps(p, j))
          for (std::size_t b = 0; b < B; ++b)
            design(row, static_cast<Eigen::Index>((jr.atom + 1) * B + b)) += phi[b];
      }
    });
    std::vector<bool> fired(A, false);
    for (std::size_t p = 0; p < M; ++p)
      for (const auto &jr : bundle.jumps(p, j))
        fired[jr.atom] = true;
    for (std::size_t i = 0; i < m; ++i) {
      Eigen::VectorXd target(static_cast<Eigen::Index>(M));
      for (std::size_t p = 0; p < M; ++p)
        target(static_cast<Eigen::Index>(p)) = solution.y(p, j + 1, i);
      const Eigen::VectorXd coef = conditioned ? regress(design, target) : Eigen::VectorXd();
      for (std::size_t a = 0; a < A; ++a) {
        if (!fired[a])
          continue;
        const double w = measure.weight(a);
        Eigen::VectorXd own;
        if (!conditioned) {
          Eigen::VectorXd weighted(static_cast<Eigen::Index>(M));
          for (std::size_t p = 0; p < M; ++p) {
            double n = 0.0;
            for (const auto &jr : bundle.jumps(p, j))
              n += jr.atom == a ? 1.0 : 0.0;
            weighted(static_cast<Eigen::Index>(p)) =
                target(static_cast<Eigen::Index>(p)) * (n - w * dt) / (w * dt);
          }
          own = regress(design, weighted);
        }
        const double *c = conditioned ? coef.data() + (a + 1) * B : own.data();
        struct Acc {
          double num = 0.0, den = 0.0;
        };
        const Acc acc = chunked_reduce(
            M, Acc{},
            [&](std::size_t begin, std::size_t end) {
              Acc r;
              std::array<double, kMaxStateDim> shift{}, moved{};
              std::vector<double> phi(B);
              for (std::size_t p = begin; p < end; ++p) {
                const auto x = bundle.state(p, j);
                coeffs.jump(t, x, measure.mark(a), std::span<double>(shift.data(), k));
                for (std::size_t d = 0; d < k; ++d)
                  moved[d] = x[d] + shift[d];
                const double s =
                    vf.evaluate_step(j + 1, std::span<const double>(moved.data(), k), i) -
                    vf.evaluate_step(j + 1, x, i);
                basis.evaluate(x, phi);
                double u = 0.0;
                for (std::size_t b = 0; b < B; ++b)
                  u += c[b] * phi[b];
                r.num += (u - s) * (u - s);
                r.den += s * s;
              }
              return r;
            },
            [](Acc x, const Acc &y) {
              x.num += y.num;
              x.den += y.den;
              return x;
            });
        num[i] += w * acc.num;
        den[i] += w * acc.den;
      }
    }
  }
  for (std::size_t i = 0; i < m; ++i)
    out[i] = den[i] > 0.0 ? std::sqrt(num[i] / den[i])
                          : (num[i] > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  return out;
}

} // namespace jumpflow
