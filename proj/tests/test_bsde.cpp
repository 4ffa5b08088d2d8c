#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"

using namespace jumpflow;
using support::bundle_for;
using support::scalar_problem;

namespace {

double rms_gap_to_stored(const BsdeSolution &s, const PathBundle &b, std::size_t j) {
  double acc = 0.0;
  for (std::size_t p = 0; p < s.paths; ++p) {
    const double d = s.value_function.evaluate_step(j, b.state(p, j), 0) - s.y(p, j, 0);
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(s.paths));
}

struct JumpCall {
  ProblemSpec problem = harness::find_problem("jumpcall1d");
  PathBundle small, large;
  BsdeSolution small_solution, large_solution;
  RefinementStudy oracle;
};

const JumpCall &jumpcall() {
  static const JumpCall jc = [] {
    JumpCall j;
    j.small = bundle_for(j.problem, 10000, 100, 21);
    j.large = bundle_for(j.problem, 100000, 100, 21);
    j.small_solution = solve_system(j.problem.driver, j.small);
    j.large_solution = solve_system(j.problem.driver, j.large);
    j.oracle = refinement_study(j.problem, 1.0, 2001, 400);
    return j;
  }();
  return jc;
}

} // namespace

TEST(Regress, ExactLinearTargets) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd f(200, 3);
  for (Eigen::Index r = 0; r < f.rows(); ++r) {
    f(r, 0) = 1.0;
    f(r, 1) = n(gen);
    f(r, 2) = n(gen);
  }
  const Eigen::Vector3d c(0.5, -2.0, 3.0);
  const Eigen::VectorXd got = regress(f, f * c);
  EXPECT_LT((got - c).norm() / c.norm(), 1e-6);
  const Eigen::VectorXd zero = regress(f, Eigen::VectorXd::Zero(200));
  EXPECT_EQ(zero.norm(), 0.0);
}

// 3 x 2 system; the reference solves the ridge normal equations by Cramer's rule.
TEST(Regress, SmallSystemMatchesDirectSolve) {
  Eigen::MatrixXd f(3, 2);
  f << 1, 0, 1, 1, 1, 2;
  Eigen::VectorXd y(3);
  y << 1, 2, 4;
  const double rho = 1e-8 * (3.0 + 5.0) / 2.0;
  const double a = 3.0 + rho, b = 3.0, d = 5.0 + rho;
  const double r0 = 7.0, r1 = 10.0;
  const double det = a * d - b * b;
  const Eigen::VectorXd got = regress(f, y);
  EXPECT_NEAR(got(0), (d * r0 - b * r1) / det, 1e-10);
  EXPECT_NEAR(got(1), (a * r1 - b * r0) / det, 1e-10);
}

TEST(Regress, RejectsNonFinite) {
  Eigen::MatrixXd f = Eigen::MatrixXd::Ones(4, 2);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(4);
  y(2) = NAN;
  EXPECT_THROW(regress(f, y), RegressionError);
  EXPECT_THROW(regress(Eigen::MatrixXd::Ones(1, 2), Eigen::VectorXd::Zero(1)), RegressionError);
}

TEST(Bsde, MartingaleAtEveryNode) {
  const auto p = scalar_problem(0.0, 1.0, LevyMeasure(), support::constant_h(0.0),
                                harness::presets::identity_payoff(), 1.0, 0.3);
  const auto b = bundle_for(p, 10000, 20, 2);
  const auto s = solve_system(p.driver, b);
  ASSERT_GT(s.std_error0[0], 0.0);
  EXPECT_LE(std::abs(s.value0[0] - 0.3), 3.0 * s.std_error0[0]);
  // inside the simulated cloud: x0 and one standard deviation either side
  for (std::size_t j = 0; j <= 20; ++j)
    for (double k : {-1.0, 0.0, 1.0}) {
      const double x = 0.3 + k * std::sqrt(b.grid().node(j));
      const std::vector<double> xs{x};
      EXPECT_NEAR(s.value_function.evaluate_step(j, xs, 0), x, 3.0 * s.std_error0[0])
          << "node " << j << " x " << x;
    }
}

TEST(Bsde, ConstantDriver) {
  const double c = 0.7, T = 1.0;
  const auto p = scalar_problem(0.0, 1.0, LevyMeasure(), support::constant_h(c),
                                harness::presets::identity_payoff(), T, 0.3);
  const auto b = bundle_for(p, 10000, 20, 3);
  const auto s = solve_system(p.driver, b);
  EXPECT_LE(std::abs(s.value0[0] - (0.3 + c * T)), 3.0 * s.std_error0[0] + 1e-12);
  for (std::size_t j = 0; j <= 20; ++j) {
    const std::vector<double> xs{0.3};
    EXPECT_NEAR(s.value_function.evaluate_step(j, xs, 0), 0.3 + c * (T - b.grid().node(j)),
                3.0 * s.std_error0[0] + 1e-9);
  }
}

TEST(Bsde, TerminalConditionExact) {
  const auto &p = harness::find_problem("jumpcall1d");
  const auto b = bundle_for(p, 3000, 20, 4);
  const auto s = solve_system(p.driver, b);
  for (std::size_t q = 0; q < b.paths(); ++q)
    ASSERT_EQ(s.y(q, 20, 0), p.driver.g(0, b.state(q, 20)));
  for (double x : {0.5, 1.0, 1.7}) {
    const std::vector<double> xs{x};
    EXPECT_EQ(evaluate(s.value_function, p.horizon, xs), p.driver.g(0, xs));
  }
  for (double v : s.Y)
    ASSERT_TRUE(std::isfinite(v));
}

TEST(Bsde, JumpCallMatchesOracle) {
  const auto &jc = jumpcall();
  ASSERT_LT(jc.oracle.error_bar, 2e-3);
  const double mc = jc.large_solution.value0[0];
  EXPECT_TRUE(support::within(mc, jc.oracle.fine, 0.01, jc.large_solution.std_error0[0]))
      << "mc " << mc << " oracle " << jc.oracle.fine << " se " << jc.large_solution.std_error0[0];
}

TEST(Bsde, JumpResidualDecreasesWithPaths) {
  const auto &jc = jumpcall();
  const double r4 = jump_residual(jc.small_solution, jc.small)[0];
  const double r5 = jump_residual(jc.large_solution, jc.large)[0];
  EXPECT_LT(r5, r4);
  EXPECT_TRUE(std::isfinite(r4));
}

TEST(Bsde, JumpResidualEmptyMeasure) {
  const auto p = scalar_problem(0.0, 1.0, LevyMeasure(), support::constant_h(0.0),
                                harness::presets::identity_payoff(), 1.0, 0.0);
  const auto b = bundle_for(p, 2000, 10, 5);
  EXPECT_EQ(jump_residual(solve_system(p.driver, b), b), std::vector<double>{0.0});
}

// g(x) = x, h = 0, pure compensated jumps: u(t, x) = x, so both sides equal e.
TEST(Bsde, JumpResidualPureJumpLinear) {
  const auto &p = harness::find_problem("purejump1d");
  const auto b = bundle_for(p, 100000, 10, 6);
  const auto s = solve_system(p.driver, b);
  EXPECT_LT(jump_residual(s, b)[0], 0.05);
}

TEST(Bsde, EvaluateConstantFit) {
  const TimeGrid grid(0.0, 1.0, 4);
  const auto vf = ValueFunction::from_polynomials(grid, 1, 1, 0, [](std::size_t, std::size_t) {
    return std::vector<double>{2.5};
  });
  for (double t : {0.0, 0.3, 0.5, 1.0})
    for (double x : {-3.0, 0.0, 10.0}) {
      const std::vector<double> xs{x};
      EXPECT_EQ(evaluate(vf, t, xs), 2.5);
    }
}

TEST(Bsde, EvaluateNearestNodeTiesEarlier) {
  const TimeGrid grid(0.0, 1.0, 4);
  const auto vf = ValueFunction::from_polynomials(grid, 1, 1, 0, [](std::size_t j, std::size_t) {
    return std::vector<double>{static_cast<double>(j)};
  });
  const std::vector<double> x{0.0};
  EXPECT_EQ(evaluate(vf, 0.125, x), 0.0);
  EXPECT_EQ(evaluate(vf, 0.13, x), 1.0);
  EXPECT_EQ(evaluate(vf, 0.99, x), 4.0);
}

TEST(Bsde, EvaluateAtPathPoints) {
  const auto &jc = jumpcall();
  const auto &s = jc.small_solution;
  for (std::size_t j : {0ul, 10ul, 50ul, 99ul}) {
    double scale = 0.0;
    for (std::size_t p = 0; p < s.paths; ++p)
      scale += s.y(p, j, 0) * s.y(p, j, 0);
    scale = std::sqrt(scale / static_cast<double>(s.paths));
    EXPECT_LT(rms_gap_to_stored(s, jc.small, j), 1e-2 * scale) << "node " << j;
  }
}

TEST(Bsde, SymmetricSystem) {
  const auto &p = harness::find_problem("coupled2");
  const auto b = bundle_for(p, 5000, 20, 7);
  const auto s = solve_system(p.driver, b);
  for (std::size_t q = 0; q < s.paths; ++q)
    for (std::size_t j = 0; j <= s.steps; ++j)
      ASSERT_EQ(s.y(q, j, 0), s.y(q, j, 1));
  EXPECT_EQ(s.value0[0], s.value0[1]);
  for (std::size_t j = 0; j < s.steps; ++j)
    EXPECT_EQ(s.value_function.step(j).coefficients[0], s.value_function.step(j).coefficients[1]);
}

TEST(Bsde, EmptyMeasureEqualsClassicalScheme) {
  auto p = scalar_problem(0.0, 0.3, LevyMeasure(), harness::presets::linear_driver(0.1, 0.7),
                          harness::presets::call_payoff(1.0), 1.0, 1.0);
  const auto b = bundle_for(p, 5000, 25, 8);
  BsdeOptions off;
  off.jump_logic = false;
  const auto a = solve_system(p.driver, b);
  const auto c = solve_system(p.driver, b, nullptr, off);
  EXPECT_EQ(a.Y, c.Y);
  EXPECT_EQ(a.Z, c.Z);
  EXPECT_EQ(a.Gamma, c.Gamma);
  EXPECT_EQ(a.value0, c.value0);
}

// u(t, x) = e^{-r (T - t)} (x + 0.3 kappa (T - t)) for the linear problem.
TEST(Bsde, FrozenClosedFormIsReproduced) {
  const auto &p = harness::find_problem("linear1d");
  const double r = 0.05, kappa = 0.2, T = p.horizon;
  const auto b = bundle_for(p, 20000, 50, 9);
  const auto exact = ValueFunction::from_polynomials(
      b.grid(), 1, 1, 1, [&](std::size_t j, std::size_t) {
        const double tau = T - b.grid().node(j);
        const double disc = std::exp(-r * tau);
        return std::vector<double>{disc * 0.3 * kappa * tau, disc};
      });
  const auto s = solve_system(p.driver, b, &exact);
  const std::vector<double> x{1.0};
  const double truth = p.closed_form(0, 0.0, x);
  EXPECT_LE(std::abs(s.value0[0] - truth), 3.0 * s.std_error0[0] + 1e-9)
      << s.value0[0] << " vs " << truth;
}

TEST(Bsde, FrozenWithWrongComponentsRejected) {
  const auto &p = harness::find_problem("coupled2");
  const auto b = bundle_for(p, 100, 5, 1);
  const auto one = ValueFunction::zero(b.grid(), 1);
  EXPECT_THROW(solve_system(p.driver, b, &one), ConfigError);
}
