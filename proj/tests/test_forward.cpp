#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"

using namespace jumpflow;

namespace {

CoefficientSet affine_coefficients() {
  CoefficientSet c;
  c.drift = [](double, std::span<const double> x, std::span<double> out) { out[0] = -0.5 * x[0]; };
  c.diffusion = [](double, std::span<const double> x, std::span<double> out) {
    out[0] = 0.1 + 0.2 * x[0];
  };
  c.jump = [](double, std::span<const double> x, std::span<const double> e, std::span<double> out) {
    out[0] = 0.5 * e[0] * (1.0 + 0.1 * x[0]);
  };
  return c;
}

} // namespace

TEST(Forward, ConstantWithoutDynamics) {
  const auto c = harness::presets::arithmetic(0.0, 0.0);
  const std::vector<double> x{0.7};
  const auto b = simulate_paths(c, LevyMeasure(), x, TimeGrid(0.0, 1.0, 10), 100, 1);
  for (std::size_t p = 0; p < 100; ++p)
    for (std::size_t j = 0; j <= 10; ++j)
      ASSERT_EQ(b.state(p, j)[0], 0.7);
  EXPECT_EQ(b.total_jumps(), 0u);
  EXPECT_EQ(moment_statistic(b, 2, x), 0.0);
}

TEST(Forward, DeterministicDrift) {
  const auto c = harness::presets::arithmetic(1.0, 0.0);
  const std::vector<double> x{0.0};
  const auto b = simulate_paths(c, LevyMeasure(), x, TimeGrid(0.0, 0.5, 8), 50, 3);
  for (std::size_t p = 0; p < 50; ++p)
    EXPECT_EQ(b.state(p, 8)[0], 0.5);
}

TEST(Forward, CompensatedJumpsAreMartingale) {
  const auto c = harness::presets::arithmetic(0.0, 0.0);
  const std::vector<double> x{1.0};
  const std::size_t M = 100000;
  const auto b = simulate_paths(c, LevyMeasure::scalar({{1.0, 1.0}}), x, TimeGrid(0.0, 1.0, 10),
                                M, 5);
  double s = 0.0, s2 = 0.0;
  for (std::size_t p = 0; p < M; ++p) {
    EXPECT_EQ(b.state(p, 0)[0], 1.0);
    const double v = b.state(p, 10)[0];
    s += v;
    s2 += v * v;
  }
  const double mean = s / M;
  const double se = std::sqrt((s2 / M - mean * mean) / M);
  EXPECT_NEAR(mean, 1.0, 4.0 * se);
}

TEST(Forward, BrownianIncrementCovariance) {
  const auto c = harness::presets::arithmetic(0.0, 1.0);
  const std::vector<double> x{0.0};
  const std::size_t M = 20000, N = 20;
  const auto b = simulate_paths(c, LevyMeasure(), x, TimeGrid(0.0, 1.0, N), M, 8);
  const double dt = 1.0 / N;
  for (std::size_t j = 0; j < N; ++j) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t p = 0; p < M; ++p) {
      const double v = b.increment(p, j)[0] * b.increment(p, j)[0];
      s += v;
      s2 += v * v;
    }
    const double mean = s / M;
    EXPECT_NEAR(mean, dt, 4.0 * std::sqrt((s2 / M - mean * mean) / M)) << "step " << j;
  }
}

TEST(Forward, NoJumpsMatchesPureDiffusionEuler) {
  const auto c = affine_coefficients();
  const std::vector<double> x{0.4};
  const TimeGrid grid(0.0, 1.0, 25);
  const auto b = simulate_paths(c, LevyMeasure(), x, grid, 3000, 17);
  const double dt = grid.dt();
  for (std::size_t p = 0; p < b.paths(); ++p) {
    double v = x[0];
    for (std::size_t j = 0; j < grid.steps; ++j) {
      const double t = grid.node(j);
      double bx = 0.0, sx = 0.0;
      const std::span<const double> xs(&v, 1);
      c.drift(t, xs, std::span<double>(&bx, 1));
      c.diffusion(t, xs, std::span<double>(&sx, 1));
      double acc = bx * dt;
      acc += sx * b.increment(p, j)[0];
      v = v + acc;
      ASSERT_EQ(v, b.state(p, j + 1)[0]) << "path " << p << " step " << j;
    }
  }
}

TEST(Forward, DeterministicAcrossWorkers) {
  const auto c = affine_coefficients();
  const auto mu = LevyMeasure::scalar({{1.0, 2.0}, {-0.5, 1.0}});
  const std::vector<double> x{0.2};
  const TimeGrid grid(0.0, 1.0, 20);
  set_worker_count(1);
  const auto a = simulate_paths(c, mu, x, grid, 5000, 99);
  set_worker_count(3);
  const auto b = simulate_paths(c, mu, x, grid, 5000, 99);
  set_worker_count(0);
  EXPECT_EQ(a.raw_states(), b.raw_states());
  EXPECT_EQ(a.raw_increments(), b.raw_increments());
  ASSERT_EQ(a.raw_jumps().size(), b.raw_jumps().size());
  for (std::size_t n = 0; n < a.raw_jumps().size(); ++n) {
    EXPECT_EQ(a.raw_jumps()[n].time, b.raw_jumps()[n].time);
    EXPECT_EQ(a.raw_jumps()[n].atom, b.raw_jumps()[n].atom);
  }
}

TEST(Forward, NonFiniteStateReported) {
  auto c = harness::presets::arithmetic(0.0, 1.0);
  c.drift = [](double, std::span<const double>, std::span<double> out) { out[0] = NAN; };
  const std::vector<double> x{0.0};
  try {
    simulate_paths(c, LevyMeasure(), x, TimeGrid(0.0, 1.0, 4), 10, 1);
    FAIL() << "expected a simulation error";
  } catch (const SimulationError &e) {
    EXPECT_NE(std::string(e.what()).find("path 0"), std::string::npos);
  }
}

TEST(Forward, RejectsZeroPaths) {
  const std::vector<double> x{0.0};
  EXPECT_THROW(simulate_paths(harness::presets::arithmetic(0.0, 1.0), LevyMeasure(), x,
                              TimeGrid(0.0, 1.0, 4), 0, 1),
               ConfigError);
}

// E[sup_{j} |B_{t_j}|^2] on the same 20-step grid, s - t = 0.1, from an
// independent 10^6-path simulation with a different generator.
TEST(Forward, MomentStatisticMatchesBruteForce) {
  const double span = 0.1;
  const std::size_t N = 20, big = 1000000;
  std::mt19937_64 gen(2024);
  std::normal_distribution<double> normal(0.0, std::sqrt(span / N));
  double rs = 0.0, rs2 = 0.0;
  for (std::size_t p = 0; p < big; ++p) {
    double w = 0.0, sup = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      w += normal(gen);
      sup = std::max(sup, w * w);
    }
    rs += sup;
    rs2 += sup * sup;
  }
  const double ref = rs / big;
  const double ref_se = std::sqrt((rs2 / big - ref * ref) / big);

  const std::vector<double> x{0.0};
  const std::size_t M = 100000;
  const auto b = simulate_paths(harness::presets::arithmetic(0.0, 1.0), LevyMeasure(), x,
                                TimeGrid(0.0, span, N), M, 31);
  const double est = moment_statistic(b, 2, x);
  double s2 = 0.0;
  for (std::size_t p = 0; p < M; ++p) {
    double sup = 0.0;
    for (std::size_t j = 0; j <= N; ++j)
      sup = std::max(sup, b.state(p, j)[0] * b.state(p, j)[0]);
    s2 += sup * sup;
  }
  const double se = std::sqrt((s2 / M - est * est) / M);
  EXPECT_NEAR(est, ref, 4.0 * std::hypot(se, ref_se));
  // Doob
  EXPECT_LT(est, 4.0 * span);
}

TEST(Forward, MomentStatisticLinearInSpan) {
  const auto c = affine_coefficients();
  const auto mu = LevyMeasure::scalar({{0.5, 1.0}});
  const std::vector<double> x{0.5};
  const std::size_t M = 50000;
  const auto full = simulate_paths(c, mu, x, TimeGrid(0.0, 0.2, 20), M, 4);
  const auto half = simulate_paths(c, mu, x, TimeGrid(0.0, 0.1, 20), M, 4);
  const double ratio = moment_statistic(full, 2, x) / moment_statistic(half, 2, x);
  EXPECT_NEAR(ratio, 2.0, 0.5);
}

TEST(Forward, FlowLipschitz) {
  const auto c = affine_coefficients();
  const auto mu = LevyMeasure::scalar({{0.5, 1.0}});
  const std::size_t M = 20000;
  auto stat = [&](double span, double dx) {
    const std::vector<double> x{0.5}, y{0.5 + dx};
    const auto a = simulate_paths(c, mu, x, TimeGrid(0.0, span, 20), M, 12);
    const auto b = simulate_paths(c, mu, y, TimeGrid(0.0, span, 20), M, 12);
    return flow_statistic(a, b, 2) / (span * dx * dx);
  };
  // calibrated once at span 1, dx 0.01
  const double m2 = stat(1.0, 0.01);
  ASSERT_TRUE(std::isfinite(m2));
  EXPECT_LE(stat(0.5, 0.01), 1.25 * m2);
  EXPECT_NEAR(stat(1.0, 0.005) / m2, 1.0, 0.2);
}
