#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "support.hpp"

using namespace jumpflow;
using namespace jumpflow::harness;

namespace {

ExperimentConfig quick(const std::string &problem, const std::string &mode, std::size_t paths,
                       std::size_t steps, const std::string &extra = "") {
  return parse_config("[experiment]\nproblem = " + problem + "\nmode = " + mode +
                      "\npaths = " + std::to_string(paths) + "\nsteps = " + std::to_string(steps) +
                      "\nseed = 3\n" + extra);
}

std::filesystem::path scratch(const std::string &name) {
  auto d = std::filesystem::temp_directory_path() / ("jumpflow_test_" + name);
  std::filesystem::remove_all(d);
  return d;
}

} // namespace

TEST(Config, MinimalConfigGetsDefaults) {
  const auto r = validate_config("[experiment]\nproblem = linear1d\nmode = plain\n");
  ASSERT_TRUE(r.ok()) << r.message();
  const auto &p = find_problem("linear1d");
  EXPECT_EQ(r.config->mode, Mode::Plain);
  EXPECT_EQ(r.config->paths, p.default_paths);
  EXPECT_EQ(r.config->steps, p.default_steps);
  EXPECT_EQ(r.config->degree, p.default_degree);
}

TEST(Config, ZeroPaths) {
  const auto r = validate_config("[experiment]\nproblem = linear1d\nmode = plain\npaths = 0\n");
  ASSERT_FALSE(r.ok());
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0].line, 4u);
  EXPECT_NE(r.errors[0].message.find("paths must be ≥ 1"), std::string::npos)
      << r.errors[0].message;
}

TEST(Config, UnknownKeyNamesNearest) {
  const auto r = validate_config("[experiment]\nproblem = linear1d\nmode = plain\npahts = 100\n");
  ASSERT_FALSE(r.ok());
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0].line, 4u);
  EXPECT_NE(r.errors[0].message.find("paths"), std::string::npos) << r.errors[0].message;
}

TEST(Config, EveryBadFieldReported) {
  const auto r = validate_config(
      "[experiment]\nproblem = linear1d\npaths = -3\nsteps = many\nmode = sideways\n");
  ASSERT_FALSE(r.ok());
  ASSERT_EQ(r.errors.size(), 3u) << r.message();
  EXPECT_EQ(r.errors[0].line, 3u);
  EXPECT_EQ(r.errors[1].line, 4u);
  EXPECT_EQ(r.errors[2].line, 5u);
}

TEST(Config, UnknownProblemSuggestsName) {
  const auto r = validate_config("[experiment]\nproblem = linear2d\nmode = plain\n");
  ASSERT_FALSE(r.ok());
  EXPECT_NE(r.message().find("linear1d"), std::string::npos) << r.message();
}

TEST(Config, ShippedConfigsValidate) {
  const std::filesystem::path dir = JUMPFLOW_CONFIG_DIR;
  std::size_t seen = 0;
  for (const auto &entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".ini")
      continue;
    std::ifstream f(entry.path());
    const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const auto r = validate_config(text);
    EXPECT_TRUE(r.ok()) << entry.path() << ": " << r.message();
    ++seen;
  }
  EXPECT_GE(seen, 5u);
}

TEST(Config, AtomsOverride) {
  const auto cfg = quick("jumpcall1d", "plain", 100, 5, "[levy]\natoms = [[0.25, 0.8]]\n");
  const auto p = resolve_problem(cfg);
  ASSERT_EQ(p.measure.size(), 1u);
  EXPECT_EQ(p.measure.weight(0), 0.8);
}

TEST(Registry, ListingCoversRequiredStresses) {
  const auto problems = list_problems();
  auto has = [&](auto pred) { return std::any_of(problems.begin(), problems.end(), pred); };
  EXPECT_TRUE(has([](const ProblemListing &p) { return p.name == "martingale1d"; }));
  EXPECT_TRUE(has([](const ProblemListing &p) { return p.components == 2; }));
  EXPECT_TRUE(has([](const ProblemListing &p) { return p.obstacle; }));
  // both monotonicity conditions violated: h decreasing in q and gamma changing sign
  const auto &nm = find_problem("nonmonotone1d");
  EXPECT_FALSE(nm.driver.weights.nonnegative_on(nm.measure, 0.0, nm.starts));
  const std::vector<double> x{1.0}, y{0.5}, z{0.1};
  EXPECT_LT(nm.driver.h(0, 0.0, x, y, z, 1.0), nm.driver.h(0, 0.0, x, y, z, 0.0));
  EXPECT_THROW(find_problem("nope"), ConfigError);
}

TEST(Run, PlainMartingale) {
  const auto r = run_experiment(quick("martingale1d", "plain", 10000, 20));
  const auto &rep = r.report;
  const auto &p = find_problem("martingale1d");
  ASSERT_EQ(rep["probes"].size(), p.starts.size());
  for (std::size_t k = 0; k < p.starts.size(); ++k) {
    const auto &c = rep["probes"][k]["components"][0];
    const double v = c["value"], se = c["std_error"];
    EXPECT_LE(std::abs(v - p.starts[k][0]), 3.0 * se) << "probe " << k;
  }
  EXPECT_TRUE(rep["probes"][0]["diagnostics"].contains("jump_residual"));
  EXPECT_TRUE(r.convergence.empty());
}

TEST(Run, NumericsIndependentOfWorkers) {
  const auto cfg = quick("nonmonotone1d", "picard", 3000, 20);
  set_worker_count(1);
  const auto a = run_experiment(cfg);
  set_worker_count(3);
  const auto b = run_experiment(cfg);
  const auto c = run_experiment(cfg);
  set_worker_count(0);
  EXPECT_EQ(numerics(a.report).dump(), numerics(b.report).dump());
  EXPECT_EQ(numerics(b.report).dump(), numerics(c.report).dump());
  EXPECT_EQ(b.report["runtime"]["workers"], 3);
}

TEST(Run, CompareModeWritesErrors) {
  const auto cfg = quick("jumpcall1d", "compare", 20000, 50,
                         "tol = 1e-7\n[oracle]\nnodes = 801\ntime_steps = 200\n");
  const auto dir = scratch("compare");
  const auto r = run(cfg, dir);
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_TRUE(r.errors[0].within) << r.errors[0].rel_error;
  EXPECT_LT(r.report["comparison"]["max_rel_error"].get<double>(), 0.015);
  EXPECT_TRUE(std::filesystem::exists(dir / "report.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "convergence.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "errors.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "oracle_grid_0.csv"));
  std::ifstream f(dir / "errors.csv");
  std::string header;
  std::getline(f, header);
  EXPECT_EQ(header.substr(0, 8), "probe,t,");
  std::filesystem::remove_all(dir);
}

TEST(Run, PlainModeHasNoErrorsFile) {
  const auto dir = scratch("plain");
  run(quick("purejump1d", "plain", 1000, 10), dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "report.json"));
  EXPECT_FALSE(std::filesystem::exists(dir / "errors.csv"));
  std::filesystem::remove_all(dir);
}

TEST(Run, ReflectedReportsSkorokhod) {
  const auto r = run_experiment(quick("american1d", "reflected", 5000, 25));
  const auto &d = r.report["probes"][0]["diagnostics"];
  EXPECT_TRUE(d["skorokhod"]["exact"].get<bool>());
  EXPECT_TRUE(d.contains("penalty_cross_check"));
  EXPECT_FALSE(r.convergence.empty());
}

TEST(Run, OracleModeIsDeterministic) {
  const auto r = run_experiment(quick("linear1d", "oracle", 1, 1,
                                      "[oracle]\nnodes = 401\ntime_steps = 100\n"));
  const auto &c = r.report["probes"][0]["components"][0];
  EXPECT_EQ(c["std_error"], "deterministic");
  EXPECT_TRUE(c["value"].is_number());
}

TEST(Run, ObstacleModeOnPlainProblemRejected) {
  EXPECT_THROW(run_experiment(quick("linear1d", "reflected", 100, 5)), ConfigError);
}
