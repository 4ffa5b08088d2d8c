#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace jumpflow;
using support::bundle_for;

namespace {

ObstacleSpec constant_obstacle(double c) {
  return ObstacleSpec{[c](double, std::span<const double>) { return c; }};
}

ObstacleSpec put_obstacle(double strike, double lift = 0.0) {
  return ObstacleSpec{[=](double, std::span<const double> x) {
    return std::max(strike - x[0], 0.0) + lift;
  }};
}

void expect_k_valid(const ReflectedSolution &s) {
  for (std::size_t p = 0; p < s.base.paths; ++p) {
    ASSERT_EQ(s.k(p, 0), 0.0);
    for (std::size_t j = 0; j < s.base.steps; ++j)
      ASSERT_GE(s.dk(p, j), 0.0);
  }
}

} // namespace

TEST(Reflected, InactiveObstacleMatchesPlainSolver) {
  const auto &p = harness::find_problem("jumpcall1d");
  const auto b = bundle_for(p, 5000, 50, 1);
  const auto low = constant_obstacle(-1e9);
  const auto r = solve_reflected(p.driver, low, b);
  const auto s = solve_system(p.driver, b);
  for (std::size_t q = 0; q < b.paths(); ++q)
    ASSERT_EQ(r.k(q, b.steps()), 0.0);
  EXPECT_EQ(r.base.Y, s.Y);
  EXPECT_EQ(r.base.Z, s.Z);
  EXPECT_EQ(r.base.Gamma, s.Gamma);
  EXPECT_EQ(r.base.value0, s.value0);
  EXPECT_EQ(complementarity_residual(r, low, b), 0.0);
}

TEST(Reflected, SitsOnConstantObstacle) {
  const double c = 0.4;
  const auto p = support::scalar_problem(0.0, 0.3, LevyMeasure::scalar({{0.2, 1.0}}),
                                         support::constant_h(0.0), support::constant_g(c), 1.0,
                                         1.0);
  const auto b = bundle_for(p, 3000, 20, 2);
  const auto obstacle = constant_obstacle(c);
  const auto r = solve_reflected(p.driver, obstacle, b);
  // exact up to the ridge shrinkage (rho ~ 1e-8 trace / B), compounded over the steps
  for (double y : r.base.Y)
    ASSERT_NEAR(y, c, 1e-6 * c);
  for (double k : r.K)
    ASSERT_NEAR(k, 0.0, 1e-5 * c);
  EXPECT_EQ(complementarity_residual(r, obstacle, b), 0.0);
}

TEST(Reflected, AmericanSkorokhodAndOracle) {
  const auto &p = harness::find_problem("american1d");
  const auto b = bundle_for(p, 50000, 100, 3);
  const auto r = solve_reflected(p.driver, *p.obstacle, b);
  const auto sk = skorokhod_check(r, *p.obstacle, b);
  EXPECT_TRUE(sk.exact()) << sk.below_obstacle << " " << sk.negative_increment << " "
                          << sk.complementarity;
  EXPECT_EQ(complementarity_residual(r, *p.obstacle, b), 0.0);
  expect_k_valid(r);
  const auto oracle = refinement_study(p, 1.0, 2001, 400);
  EXPECT_LT(oracle.error_bar, 2e-3);
  EXPECT_TRUE(support::within(r.base.value0[0], oracle.fine, 0.015, r.base.std_error0[0]))
      << r.base.value0[0] << " vs " << oracle.fine;
  // some paths must actually have been stopped
  double kt = 0.0;
  for (std::size_t q = 0; q < b.paths(); ++q)
    kt += r.k(q, b.steps());
  EXPECT_GT(kt, 0.0);
}

TEST(Reflected, PenaltyConvergesToMax) {
  const auto &p = harness::find_problem("american1d");
  const auto b = bundle_for(p, 20000, 100, 4);
  const double max_value = solve_reflected(p.driver, *p.obstacle, b).base.value0[0];
  double previous = INFINITY;
  for (double eps : {1e-1, 1e-2, 1e-3}) {
    ReflectionOptions opts;
    opts.mode = ReflectionMode::Penalty;
    opts.epsilon = eps;
    const auto r = solve_reflected(p.driver, *p.obstacle, b, nullptr, opts);
    expect_k_valid(r);
    const double gap = std::abs(r.base.value0[0] - max_value);
    EXPECT_LT(gap, previous) << "eps " << eps;
    previous = gap;
  }
  EXPECT_LT(previous, 0.01 * max_value);
}

TEST(Reflected, PenaltyNeedsPositiveEpsilon) {
  const auto &p = harness::find_problem("american1d");
  const auto b = bundle_for(p, 100, 5, 1);
  ReflectionOptions opts;
  opts.mode = ReflectionMode::Penalty;
  opts.epsilon = 0.0;
  EXPECT_THROW(solve_reflected(p.driver, *p.obstacle, b, nullptr, opts), ConfigError);
}

// h independent of (y, z, q) and a point cloud (sigma = 0, no jumps): the
// regression is exact, so the single-step max propagates monotonicity.
TEST(Reflected, MonotoneInObstacleDeterministic) {
  const auto p = support::scalar_problem(-0.5, 0.0, LevyMeasure(), support::constant_h(-1.0),
                                         harness::presets::put_payoff(1.0), 1.0, 1.0);
  const auto b = bundle_for(p, 10, 40, 5);
  const auto lo = solve_reflected(p.driver, put_obstacle(1.0), b);
  const auto hi_obstacle = ObstacleSpec{[](double t, std::span<const double> x) {
    return std::max(1.0 - x[0], 0.0) + 0.05 * (1.0 - t);
  }};
  const auto hi = solve_reflected(p.driver, hi_obstacle, b);
  for (std::size_t n = 0; n < lo.base.Y.size(); ++n)
    ASSERT_GE(hi.base.Y[n], lo.base.Y[n]) << "entry " << n;
  // and the lower one really is reflected somewhere
  EXPECT_GT(lo.k(0, 40), 0.0);
}

TEST(Reflected, MonotoneInObstacleValue) {
  const auto &base = harness::find_problem("american1d");
  auto p = base;
  p.driver.h = support::constant_h(-0.02);
  const auto b = bundle_for(p, 20000, 50, 6);
  double previous = -INFINITY;
  for (double lift : {0.0, 0.01, 0.03}) {
    auto obstacle = ObstacleSpec{[lift](double t, std::span<const double> x) {
      return std::max(1.0 - x[0], 0.0) + lift * (0.5 - t);
    }};
    const double v = solve_reflected(p.driver, obstacle, b).base.value0[0];
    EXPECT_GE(v, previous) << "lift " << lift;
    previous = v;
  }
}

TEST(Reflected, CompatibilityChecked) {
  const auto &p = harness::find_problem("american1d");
  const auto b = bundle_for(p, 200, 10, 7);
  const auto above = put_obstacle(1.0, 0.1);
  EXPECT_THROW(solve_reflected(p.driver, above, b), ConfigError);
  auto reversed = above;
  reversed.compatibility = Compatibility::ObstacleAboveTerminal;
  EXPECT_NO_THROW(solve_reflected(p.driver, reversed, b));
}

TEST(Reflected, AprioriZeroData) {
  const auto p = support::scalar_problem(0.0, 0.3, LevyMeasure::scalar({{0.2, 1.0}}),
                                         support::constant_h(0.0), support::constant_g(0.0), 1.0,
                                         1.0);
  const auto b = bundle_for(p, 1000, 10, 8);
  const auto zero = constant_obstacle(0.0);
  const auto r = solve_reflected(p.driver, zero, b);
  EXPECT_EQ(apriori_bound_ratio(r, p.driver, zero, b), 0.0);
  EXPECT_EQ(apriori_bound_ratio(r.base, p.driver, b), 0.0);
}

TEST(Reflected, AprioriNonzeroAgainstZeroDataFails) {
  const auto &p = harness::find_problem("martingale1d");
  const auto b = bundle_for(p, 1000, 10, 9);
  const auto s = solve_system(p.driver, b);
  auto zero_driver = p.driver;
  zero_driver.g = support::constant_g(0.0);
  EXPECT_THROW(apriori_bound(s, nullptr, zero_driver, nullptr, b), BoundError);
}

TEST(Reflected, AprioriStableUnderDoubling) {
  const auto &p = harness::find_problem("linear1d");
  const auto b1 = bundle_for(p, 10000, 50, 10);
  const auto b2 = bundle_for(p, 20000, 50, 10);
  const double r1 = apriori_bound_ratio(solve_system(p.driver, b1), p.driver, b1);
  const double r2 = apriori_bound_ratio(solve_system(p.driver, b2), p.driver, b2);
  ASSERT_TRUE(std::isfinite(r1));
  EXPECT_NEAR(r2 / r1, 1.0, 0.2);
  EXPECT_LE(r2, harness::kBoundCalibration);
}

TEST(Reflected, FixedPointConvergesOnObstacleProblems) {
  for (const char *name : {"american1d", "nonmonotone_obstacle1d"}) {
    const auto &p = harness::find_problem(name);
    const auto b = bundle_for(p, 10000, 50, 11);
    PicardOptions opts;
    opts.tol = 1e-7;
    const auto r = solve_reflected_fixed_point(p.driver, *p.obstacle, b, opts);
    EXPECT_TRUE(r.fixed_point.diagnostics.converged) << name;
    EXPECT_TRUE(skorokhod_check(r.solution, *p.obstacle, b).exact()) << name;
  }
}
