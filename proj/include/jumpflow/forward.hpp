#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "jumpflow/error.hpp"
#include "jumpflow/measure.hpp"
#include "jumpflow/parallel.hpp"
#include "jumpflow/rng.hpp"

namespace jumpflow {

/// Largest state dimension handled with stack buffers.
inline constexpr std::size_t kMaxStateDim = 8;

using DriftFn = std::function<void(double t, std::span<const double> x, std::span<double> out)>;
/// Writes sigma(t, x) as a row-major k x d matrix.
using DiffusionFn = std::function<void(double t, std::span<const double> x, std::span<double> out)>;
using JumpFn = std::function<void(double t, std::span<const double> x,
                                  std::span<const double> mark, std::span<double> out)>;

/**
 * Coefficients (b, sigma, beta) of the forward jump-diffusion
 *   dX = b dt + sigma dB + int beta(t, X-, e) mu~(dt, de).
 * All callables must be pure so the set can be shared across workers.
 */
struct CoefficientSet {
  std::size_t state_dim = 1;
  std::size_t brownian_dim = 1;
  DriftFn drift;
  DiffusionFn diffusion;
  JumpFn jump;
  /// Declared constant C in |beta| <= C (1 ^ |e|) and the Lipschitz bounds.
  double lipschitz_bound = 1.0;

  void validate() const {
    if (state_dim == 0 || state_dim > kMaxStateDim)
      throw ConfigError("coefficients: state dimension must be in [1, " +
                        std::to_string(kMaxStateDim) + "]");
    if (brownian_dim == 0 || brownian_dim > kMaxStateDim)
      throw ConfigError("coefficients: brownian dimension must be in [1, " +
                        std::to_string(kMaxStateDim) + "]");
    if (!drift || !diffusion || !jump)
      throw ConfigError("coefficients: drift, diffusion and jump maps are required");
  }

  /// Sample-based check of |beta(t,x,e)| <= C (1 ^ |e|); returns the worst ratio.
  double jump_bound_ratio(const LevyMeasure &measure, double t,
                          std::span<const std::vector<double>> points) const {
    double worst = 0.0;
    std::array<double, kMaxStateDim> out{};
    for (const auto &x : points) {
      for (std::size_t a = 0; a < measure.size(); ++a) {
        jump(t, x, measure.mark(a), std::span<double>(out.data(), state_dim));
        double nb = 0.0, ne = 0.0;
        for (std::size_t c = 0; c < state_dim; ++c)
          nb += out[c] * out[c];
        for (double e : measure.mark(a))
          ne += e * e;
        const double cap = lipschitz_bound * std::min(1.0, std::sqrt(ne));
        worst = std::max(worst, std::sqrt(nb) / cap);
      }
    }
    return worst;
  }

  /// Sample-based linear growth check: max over points of |b|+|sigma| / (C (1+|x|)).
  double growth_ratio(double t, std::span<const std::vector<double>> points) const {
    double worst = 0.0;
    std::array<double, kMaxStateDim> b{};
    std::vector<double> s(state_dim * brownian_dim);
    for (const auto &x : points) {
      drift(t, x, std::span<double>(b.data(), state_dim));
      diffusion(t, x, s);
      double nb = 0.0, ns = 0.0, nx = 0.0;
      for (std::size_t c = 0; c < state_dim; ++c)
        nb += b[c] * b[c];
      for (double v : s)
        ns += v * v;
      for (double v : x)
        nx += v * v;
      worst = std::max(worst, (std::sqrt(nb) + std::sqrt(ns)) /
                                  (lipschitz_bound * (1.0 + std::sqrt(nx))));
    }
    return worst;
  }
};

/// Uniform grid t_0 < ... < t_N = T.
struct TimeGrid {
  double t_start = 0.0;
  double horizon = 1.0;
  std::size_t steps = 1;

  TimeGrid() = default;
  TimeGrid(double t0, double T, std::size_t n) : t_start(t0), horizon(T), steps(n) {
    if (!(T > t0))
      throw ConfigError("time grid: horizon must exceed the start time");
    if (n == 0)
      throw ConfigError("time grid: steps must be >= 1");
  }

  double dt() const noexcept { return (horizon - t_start) / static_cast<double>(steps); }
  double node(std::size_t j) const noexcept {
    return j >= steps ? horizon : t_start + static_cast<double>(j) * dt();
  }

  /// Nearest node to t, ties to the earlier node, clamped to [0, N].
  std::size_t nearest(double t) const noexcept {
    const double s = (t - t_start) / dt();
    if (!(s > 0.0))
      return 0;
    if (s >= static_cast<double>(steps))
      return steps;
    const double fl = std::floor(s);
    auto j = static_cast<std::size_t>(fl);
    if (s - fl > 0.5)
      ++j;
    return std::min(j, steps);
  }
};

/**
 * Simulated forward paths X^{t,x} together with the noise that drove them.
 * Layout is path-major: state(p, j) is contiguous in the state dimension.
 */
class PathBundle {
public:
  PathBundle() = default;

  const TimeGrid &grid() const noexcept { return grid_; }
  std::size_t paths() const noexcept { return paths_; }
  std::size_t steps() const noexcept { return grid_.steps; }
  std::size_t state_dim() const noexcept { return k_; }
  std::size_t brownian_dim() const noexcept { return d_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::span<const double> start() const noexcept { return start_; }
  const CoefficientSet &coefficients() const noexcept { return coeffs_; }
  const LevyMeasure &measure() const noexcept { return measure_; }

  std::span<const double> state(std::size_t p, std::size_t j) const {
    return {states_.data() + (p * (grid_.steps + 1) + j) * k_, k_};
  }
  std::span<const double> increment(std::size_t p, std::size_t j) const {
    return {increments_.data() + (p * grid_.steps + j) * d_, d_};
  }
  /// Jumps of path p in (t_j, t_{j+1}], sorted by time.
  std::span<const JumpRecord> jumps(std::size_t p, std::size_t j) const {
    const std::size_t cell = p * grid_.steps + j;
    return {jump_records_.data() + jump_offsets_[cell],
            jump_offsets_[cell + 1] - jump_offsets_[cell]};
  }
  std::size_t total_jumps() const noexcept { return jump_records_.size(); }

  const std::vector<double> &raw_states() const noexcept { return states_; }
  const std::vector<double> &raw_increments() const noexcept { return increments_; }
  const std::vector<JumpRecord> &raw_jumps() const noexcept { return jump_records_; }

private:
  friend PathBundle simulate_paths(const CoefficientSet &, const LevyMeasure &,
                                   std::span<const double>, const TimeGrid &,
                                   std::size_t, std::uint64_t);

  TimeGrid grid_;
  std::size_t paths_ = 0;
  std::size_t k_ = 1;
  std::size_t d_ = 1;
  std::uint64_t seed_ = 0;
  std::vector<double> start_;
  CoefficientSet coeffs_;
  LevyMeasure measure_;
  std::vector<double> states_;
  std::vector<double> increments_;
  std::vector<std::size_t> jump_offsets_;
  std::vector<JumpRecord> jump_records_;
};

/**
 * Euler scheme for the jump-diffusion on `grid`, started at `start` at
 * grid.t_start. Jumps inside (t_j, t_{j+1}] use the step-start state and
 * the compensator is the exact atomic integral -dt int beta dlambda.
 * Path p draws from the counter-based stream (seed, p).
 */
inline PathBundle simulate_paths(const CoefficientSet &coeffs, const LevyMeasure &measure,
                                 std::span<const double> start, const TimeGrid &grid,
                                 std::size_t n_paths, std::uint64_t seed) {
  coeffs.validate();
  if (n_paths == 0)
    throw ConfigError("simulate_paths: at least one path is required");
  if (start.size() != coeffs.state_dim)
    throw ConfigError("simulate_paths: start point has wrong dimension");
  if (!measure.empty() && measure.mark_dim() == 0)
    throw ConfigError("simulate_paths: invalid measure");

  const std::size_t k = coeffs.state_dim;
  const std::size_t d = coeffs.brownian_dim;
  const std::size_t N = grid.steps;
  const std::size_t A = measure.size();
  const double dt = grid.dt();
  const double sqrt_dt = std::sqrt(dt);
  const bool has_jumps = !measure.empty();

  PathBundle b;
  b.grid_ = grid;
  b.paths_ = n_paths;
  b.k_ = k;
  b.d_ = d;
  b.seed_ = seed;
  b.start_.assign(start.begin(), start.end());
  b.coeffs_ = coeffs;
  b.measure_ = measure;
  b.states_.resize(n_paths * (N + 1) * k);
  b.increments_.resize(n_paths * N * d);

  std::vector<std::size_t> counts(has_jumps ? n_paths * N : 0, 0);
  std::vector<std::vector<JumpRecord>> chunk_jumps(chunk_count(n_paths));

  for_each_chunk(n_paths, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
    std::vector<double> drift(k), sigma(k * d), beta(A * k), comp(k);
    auto &local_jumps = chunk_jumps[chunk];
    for (std::size_t p = begin; p < end; ++p) {
      CounterRng rng(seed, p);
      std::normal_distribution<double> normal(0.0, 1.0);
      double *x = b.states_.data() + p * (N + 1) * k;
      std::copy(start.begin(), start.end(), x);
      for (std::size_t j = 0; j < N; ++j) {
        const double t = grid.node(j);
        const std::span<const double> xj(x + j * k, k);
        double *xn = x + (j + 1) * k;
        double *dB = b.increments_.data() + (p * N + j) * d;
        for (std::size_t l = 0; l < d; ++l)
          dB[l] = sqrt_dt * normal(rng);
        coeffs.drift(t, xj, drift);
        coeffs.diffusion(t, xj, sigma);
        for (std::size_t c = 0; c < k; ++c) {
          double acc = drift[c] * dt;
          for (std::size_t l = 0; l < d; ++l)
            acc += sigma[c * d + l] * dB[l];
          xn[c] = xj[c] + acc;
        }
        if (has_jumps) {
          std::fill(comp.begin(), comp.end(), 0.0);
          for (std::size_t a = 0; a < A; ++a) {
            std::span<double> ba(beta.data() + a * k, k);
            coeffs.jump(t, xj, measure.mark(a), ba);
            for (std::size_t c = 0; c < k; ++c)
              comp[c] += measure.weight(a) * ba[c];
          }
          const std::size_t before = local_jumps.size();
          counts[p * N + j] =
              measure.append_jumps(t, grid.node(j + 1), rng, local_jumps);
          for (std::size_t n = before; n < local_jumps.size(); ++n) {
            const double *ba = beta.data() + local_jumps[n].atom * k;
            for (std::size_t c = 0; c < k; ++c)
              xn[c] += ba[c];
          }
          for (std::size_t c = 0; c < k; ++c)
            xn[c] -= dt * comp[c];
        }
        for (std::size_t c = 0; c < k; ++c)
          if (!std::isfinite(xn[c]))
            throw SimulationError("simulate_paths: non-finite state on path " +
                                  std::to_string(p) + " at step " +
                                  std::to_string(j + 1));
      }
    }
  });

  b.jump_offsets_.assign(n_paths * N + 1, 0);
  if (has_jumps) {
    for (std::size_t cell = 0; cell < n_paths * N; ++cell)
      b.jump_offsets_[cell + 1] = b.jump_offsets_[cell] + counts[cell];
    b.jump_records_.reserve(b.jump_offsets_.back());
    for (auto &cj : chunk_jumps)
      b.jump_records_.insert(b.jump_records_.end(), cj.begin(), cj.end());
  }
  return b;
}

/**
 * Monte-Carlo estimate of E[ sup_{r <= s} |X_r - x|^p ] over grid nodes
 * 0..last_step (default: the whole horizon).
 */
inline double moment_statistic(const PathBundle &bundle, int p, std::span<const double> x,
                               std::size_t last_step = static_cast<std::size_t>(-1)) {
  if (p < 2)
    throw ConfigError("moment_statistic: p must be >= 2");
  const std::size_t last = std::min(last_step, bundle.steps());
  const std::size_t k = bundle.state_dim();
  const double total = chunked_reduce(
      bundle.paths(), 0.0,
      [&](std::size_t begin, std::size_t end) {
        double acc = 0.0;
        for (std::size_t path = begin; path < end; ++path) {
          double sup = 0.0;
          for (std::size_t j = 0; j <= last; ++j) {
            auto s = bundle.state(path, j);
            double n2 = 0.0;
            for (std::size_t c = 0; c < k; ++c)
              n2 += (s[c] - x[c]) * (s[c] - x[c]);
            sup = std::max(sup, n2);
          }
          acc += std::pow(sup, 0.5 * p);
        }
        return acc;
      },
      [](double a, double b) { return a + b; });
  return total / static_cast<double>(bundle.paths());
}

/**
 * Flow statistic E[ sup |X^{t,x} - X^{t,x'} - (x - x')|^p ] for two bundles
 * simulated with the same seed and grid from x and x'.
 */
inline double flow_statistic(const PathBundle &a, const PathBundle &b, int p) {
  if (a.paths() != b.paths() || a.steps() != b.steps() || a.seed() != b.seed())
    throw ConfigError("flow_statistic: bundles must share seed, paths and grid");
  const std::size_t k = a.state_dim();
  const double total = chunked_reduce(
      a.paths(), 0.0,
      [&](std::size_t begin, std::size_t end) {
        double acc = 0.0;
        for (std::size_t path = begin; path < end; ++path) {
          double sup = 0.0;
          for (std::size_t j = 0; j <= a.steps(); ++j) {
            auto sa = a.state(path, j);
            auto sb = b.state(path, j);
            double n2 = 0.0;
            for (std::size_t c = 0; c < k; ++c) {
              const double r = sa[c] - sb[c] - (a.start()[c] - b.start()[c]);
              n2 += r * r;
            }
            sup = std::max(sup, n2);
          }
          acc += std::pow(sup, 0.5 * p);
        }
        return acc;
      },
      [](double x, double y) { return x + y; });
  return total / static_cast<double>(a.paths());
}

} // namespace jumpflow
