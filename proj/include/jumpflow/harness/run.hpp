#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "jumpflow/bsde.hpp"
#include "jumpflow/error.hpp"
#include "jumpflow/forward.hpp"
#include "jumpflow/harness/config.hpp"
#include "jumpflow/harness/registry.hpp"
#include "jumpflow/oracle.hpp"
#include "jumpflow/parallel.hpp"
#include "jumpflow/picard.hpp"
#include "jumpflow/reflected.hpp"

namespace jumpflow::harness {

/// Bound-ratio ceiling C_cal: 4 x the linear1d ratio (1.356 at M = 1e5, N = 50, seed 1).
inline constexpr double kBoundCalibration = 5.4;

/// Seed of the bundle behind probe k.
inline std::uint64_t probe_seed(std::uint64_t seed, std::size_t probe) {
  return seed + 1000003ull * static_cast<std::uint64_t>(probe);
}

struct ConvergenceRow {
  std::size_t probe = 0;
  std::size_t iteration = 0;
  double alpha_delta = 0.0;
  double sup_delta = 0.0;
  double ratio = 0.0; // NaN on the first iteration
};

struct ErrorRow {
  std::size_t probe = 0;
  double t = 0.0;
  std::vector<double> x;
  std::size_t component = 0;
  double value = 0.0;
  double std_error = 0.0;
  double oracle = 0.0;
  double oracle_error_bar = 0.0;
  double abs_error = 0.0;
  double rel_error = 0.0;
  /// max(1.5%, 3 std errors / |oracle|)
  double tolerance = 0.0;
  bool within = false;
};

struct RunResult {
  nlohmann::json report;
  std::vector<ConvergenceRow> convergence;
  std::vector<ErrorRow> errors;
  /// Fine oracle grids per probe (oracle and compare modes).
  std::vector<GridSolution> grids;
};

/// The report without its "runtime" block; what the determinism contract covers.
inline nlohmann::json numerics(const nlohmann::json &report) {
  nlohmann::json out = report;
  out.erase("runtime");
  return out;
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline nlohmann::json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

inline nlohmann::json picard_json(const PicardDiagnostics &d) {
  nlohmann::json j;
  j["iterations"] = d.iterations;
  j["alpha"] = d.alpha;
  j["converged"] = d.converged;
  j["median_ratio"] = finite_or_null(d.median_ratio());
  j["alpha_deltas"] = d.deltas;
  j["sup_deltas"] = d.sup_deltas;
  return j;
}

inline void add_convergence(std::vector<ConvergenceRow> &rows, std::size_t probe,
                            const PicardDiagnostics &d) {
  for (std::size_t n = 0; n < d.deltas.size(); ++n)
    rows.push_back({probe, n + 1, d.deltas[n], d.sup_deltas[n],
                    n == 0 ? std::numeric_limits<double>::quiet_NaN() : d.ratios[n - 1]});
}

inline nlohmann::json regression_json(const BsdeSolution &s) {
  double cond = 1.0, resid = 0.0;
  for (const auto &d : s.diagnostics) {
    cond = std::max(cond, d.condition);
    resid += d.residual_rms;
  }
  if (!s.diagnostics.empty())
    resid /= static_cast<double>(s.diagnostics.size());
  return {{"max_condition", finite_or_null(cond)}, {"mean_residual_rms", resid},
          {"max_degree", s.value_function.max_degree()}};
}

inline nlohmann::json bound_json(const AprioriBound &b) {
  return {{"lhs", b.lhs},
          {"rhs", b.rhs},
          {"ratio", b.ratio()},
          {"calibration", kBoundCalibration},
          {"within", b.ratio() <= kBoundCalibration}};
}

template <class F> nlohmann::json guarded_bound(F &&f) {
  try {
    return bound_json(f());
  } catch (const BoundError &e) {
    return {{"failure", e.what()}};
  }
}

inline nlohmann::json k_stats(const ReflectedSolution &r) {
  const std::size_t M = r.base.paths, N = r.base.steps;
  double sum = 0.0, mx = 0.0;
  std::size_t active_paths = 0, active_nodes = 0;
  for (std::size_t p = 0; p < M; ++p) {
    const double kT = r.k(p, N);
    sum += kT;
    mx = std::max(mx, kT);
    active_paths += kT > 0.0;
    for (std::size_t j = 0; j < N; ++j)
      active_nodes += r.dk(p, j) > 0.0;
  }
  return {{"mean_KT", sum / static_cast<double>(M)},
          {"max_KT", mx},
          {"active_path_fraction", static_cast<double>(active_paths) / static_cast<double>(M)},
          {"activation_frequency",
           static_cast<double>(active_nodes) / static_cast<double>(M * N)}};
}

inline nlohmann::json value_json(double v, std::optional<double> se) {
  nlohmann::json j;
  j["value"] = v;
  if (se)
    j["std_error"] = *se;
  else
    j["std_error"] = "deterministic";
  return j;
}

} // namespace detail

/**
 * Runs the configured pipeline on every probe start point and assembles the
 * report. Nothing is written; see write_outputs.
 */
inline RunResult run_experiment(const ExperimentConfig &cfg) {
  {
    std::vector<ConfigIssue> issues;
    check_combination(cfg, issues);
    if (!issues.empty()) {
      std::string msg;
      for (const auto &i : issues)
        msg += (msg.empty() ? "" : "\n") + i.str();
      throw ConfigError(msg);
    }
  }
  const auto t_run = detail::Clock::now();
  const ProblemSpec problem = resolve_problem(cfg);
  const std::size_t m = problem.components();
  const TimeGrid grid = problem.grid(cfg.steps);

  PicardOptions picard;
  picard.alpha = cfg.alpha;
  picard.tol = cfg.tol;
  picard.max_iter = cfg.max_iter;
  picard.bsde.degree = cfg.degree;
  ReflectionOptions reflection;
  reflection.mode = cfg.reflection;
  reflection.epsilon = cfg.epsilon;
  reflection.bsde = picard.bsde;
  OracleOptions oracle_opts;
  oracle_opts.variant = cfg.variant;

  RunResult out;
  nlohmann::json &rep = out.report;
  rep["config"] = to_json(cfg);
  rep["problem"] = {{"name", problem.name},
                    {"description", problem.description},
                    {"stresses", problem.stresses},
                    {"state_dim", problem.state_dim()},
                    {"components", m},
                    {"atoms", problem.measure.size()},
                    {"obstacle", problem.obstacle.has_value()},
                    {"t_start", problem.t_start},
                    {"horizon", problem.horizon}};
  rep["probes"] = nlohmann::json::array();
  nlohmann::json timings = nlohmann::json::array();

  for (std::size_t k = 0; k < problem.starts.size(); ++k) {
    const auto t_probe = detail::Clock::now();
    const std::vector<double> &x0 = problem.starts[k];
    const std::uint64_t seed = probe_seed(cfg.seed, k);
    nlohmann::json probe;
    probe["index"] = k;
    probe["t"] = problem.t_start;
    probe["x"] = x0;
    nlohmann::json diag;

    std::vector<double> values(m, 0.0);
    std::vector<std::optional<double>> errors(m);
    std::string operation;

    const bool monte_carlo = cfg.mode != Mode::Oracle;
    const bool oracle = cfg.mode == Mode::Oracle || cfg.mode == Mode::Compare;

    if (monte_carlo) {
      const PathBundle bundle =
          simulate_paths(problem.coefficients, problem.measure, x0, grid, cfg.paths, seed);
      probe["bundle"] = {{"paths", cfg.paths}, {"steps", cfg.steps}, {"seed", seed}};
      const bool reflected =
          cfg.mode == Mode::Reflected || (cfg.mode == Mode::Compare && problem.obstacle);

      if (reflected) {
        operation = "solve_reflected_fixed_point";
        const ObstacleSpec &obstacle = *problem.obstacle;
        const auto r = solve_reflected_fixed_point(problem.driver, obstacle, bundle, picard,
                                                   reflection);
        const BsdeSolution &s = r.solution.base;
        values = s.value0;
        errors.assign(s.std_error0.begin(), s.std_error0.end());
        diag["picard"] = detail::picard_json(r.fixed_point.diagnostics);
        detail::add_convergence(out.convergence, k, r.fixed_point.diagnostics);
        const auto sk = skorokhod_check(r.solution, obstacle, bundle);
        diag["skorokhod"] = {{"nodes", sk.nodes},
                             {"below_obstacle", sk.below_obstacle},
                             {"negative_increment", sk.negative_increment},
                             {"complementarity_violations", sk.complementarity},
                             {"exact", sk.exact()}};
        diag["complementarity_residual"] = complementarity_residual(
            r.solution, obstacle, bundle, cfg.reflection == ReflectionMode::Max);
        diag["K"] = detail::k_stats(r.solution);
        diag["regression"] = detail::regression_json(s);
        diag["apriori_bound"] = detail::guarded_bound([&] {
          return apriori_bound(s, &r.solution.K, problem.driver, &obstacle, bundle);
        });
        if (cfg.cross_check && cfg.reflection == ReflectionMode::Max) {
          ReflectionOptions pen = reflection;
          pen.mode = ReflectionMode::Penalty;
          const auto p = solve_reflected(problem.driver, obstacle, bundle,
                                         &r.fixed_point.value_function, pen);
          diag["penalty_cross_check"] = {
              {"epsilon", pen.epsilon},
              {"value", p.base.value0[0]},
              {"rel_gap", std::abs(p.base.value0[0] - values[0]) /
                              std::max(std::abs(values[0]), 1e-12)}};
        }
      } else if (cfg.mode == Mode::Plain) {
        operation = "solve_system";
        const auto s = solve_system(problem.driver, bundle, nullptr, picard.bsde);
        values = s.value0;
        errors.assign(s.std_error0.begin(), s.std_error0.end());
        diag["regression"] = detail::regression_json(s);
        diag["jump_residual"] = jump_residual(s, bundle, cfg.degree);
        diag["jump_residual_compensated"] =
            jump_residual(s, bundle, cfg.degree, JumpEstimator::Compensated);
        diag["apriori_bound"] = detail::guarded_bound(
            [&] { return apriori_bound(s, nullptr, problem.driver, nullptr, bundle); });
      } else if (cfg.mode == Mode::Frozen) {
        operation = "solve_system(frozen = terminal extension)";
        const auto u0 = ValueFunction::terminal_extension(grid, m, problem.driver.g);
        const auto s = solve_system(problem.driver, bundle, &u0, picard.bsde);
        values = s.value0;
        errors.assign(s.std_error0.begin(), s.std_error0.end());
        diag["regression"] = detail::regression_json(s);
        diag["jump_residual"] = jump_residual(s, bundle, cfg.degree);
        diag["jump_residual_compensated"] =
            jump_residual(s, bundle, cfg.degree, JumpEstimator::Compensated);
      } else {
        operation = "solve_fixed_point";
        const auto r = solve_fixed_point(problem.driver, bundle, picard);
        const BsdeSolution &s = r.solution;
        values = s.value0;
        errors.assign(s.std_error0.begin(), s.std_error0.end());
        diag["picard"] = detail::picard_json(r.diagnostics);
        detail::add_convergence(out.convergence, k, r.diagnostics);
        diag["regression"] = detail::regression_json(s);
        diag["jump_residual"] = jump_residual(s, bundle, cfg.degree);
        diag["jump_residual_compensated"] =
            jump_residual(s, bundle, cfg.degree, JumpEstimator::Compensated);
        diag["apriori_bound"] = detail::guarded_bound(
            [&] { return apriori_bound(s, nullptr, problem.driver, nullptr, bundle); });
        // one more frozen solve from the converged u
        const auto again = solve_system(problem.driver, bundle, &r.value_function, picard.bsde);
        nlohmann::json shift = nlohmann::json::array();
        for (std::size_t i = 0; i < m; ++i)
          shift.push_back(std::abs(again.value0[i] - values[i]) /
                          std::max(s.std_error0[i], 1e-300));
        diag["frozen_point_shift_in_std_errors"] = shift;
      }
    }

    if (oracle) {
      nlohmann::json od = nlohmann::json::array();
      for (std::size_t i = 0; i < m; ++i) {
        auto study = refinement_study(problem, x0.at(0), problem.oracle_nodes,
                                      problem.oracle_time_steps, oracle_opts, i);
        OracleOptions other = oracle_opts;
        other.variant = cfg.variant == NonlocalVariant::Solution ? NonlocalVariant::TestFunction
                                                                 : NonlocalVariant::Solution;
        const auto alt = refinement_study(problem, x0.at(0), problem.oracle_nodes,
                                          problem.oracle_time_steps, other, i);
        const double gap = std::abs(alt.fine - study.fine) / std::max(std::abs(study.fine), 1e-12);
        od.push_back({{"component", i},
                      {"fine", study.fine},
                      {"coarse", study.coarse},
                      {"richardson", study.richardson},
                      {"error_bar", study.error_bar},
                      {"nodes", problem.oracle_nodes},
                      {"time_steps", problem.oracle_time_steps},
                      {"variant_gap", gap},
                      {"variant_gap_within_2x_error_bar",
                       gap <= 2.0 * std::max(study.error_bar, alt.error_bar)}});
        if (cfg.mode == Mode::Oracle) {
          values[i] = study.fine;
          errors[i] = std::nullopt;
          operation = problem.obstacle ? "solve_pide_obstacle" : "solve_pide";
        } else {
          ErrorRow row;
          row.probe = k;
          row.t = problem.t_start;
          row.x = x0;
          row.component = i;
          row.value = values[i];
          row.std_error = errors[i].value_or(0.0);
          row.oracle = study.fine;
          row.oracle_error_bar = study.error_bar;
          row.abs_error = std::abs(row.value - row.oracle);
          row.rel_error = row.abs_error / std::max(std::abs(row.oracle), 1e-12);
          row.tolerance = std::max(0.015, 3.0 * row.std_error / std::max(std::abs(row.oracle), 1e-12));
          row.within = row.rel_error <= row.tolerance;
          out.errors.push_back(row);
        }
        if (i == 0)
          out.grids.push_back(std::move(study.solution));
      }
      diag["oracle"] = od;
    }

    probe["operation"] = operation;
    probe["components"] = nlohmann::json::array();
    for (std::size_t i = 0; i < m; ++i) {
      auto c = detail::value_json(values[i], errors[i]);
      c["component"] = i;
      probe["components"].push_back(c);
    }
    probe["diagnostics"] = diag;
    rep["probes"].push_back(probe);
    timings.push_back(detail::seconds_since(t_probe));
  }

  if (cfg.mode == Mode::Compare) {
    double max_rel = 0.0, rms = 0.0;
    bool all_within = true;
    for (const auto &e : out.errors) {
      max_rel = std::max(max_rel, e.rel_error);
      rms += e.rel_error * e.rel_error;
      all_within = all_within && e.within;
    }
    if (!out.errors.empty())
      rms = std::sqrt(rms / static_cast<double>(out.errors.size()));
    rep["comparison"] = {{"max_rel_error", max_rel}, {"rms_rel_error", rms},
                         {"all_within_tolerance", all_within}};
  }
  rep["runtime"] = {{"workers", worker_count()},
                    {"probe_seconds", timings},
                    {"total_seconds", detail::seconds_since(t_run)}};
  return out;
}

inline void write_convergence_csv(const std::vector<ConvergenceRow> &rows, std::ostream &os) {
  os.precision(17);
  os << "probe,iteration,alpha_delta,sup_delta,ratio\n";
  for (const auto &r : rows) {
    os << r.probe << ',' << r.iteration << ',' << r.alpha_delta << ',' << r.sup_delta << ',';
    if (std::isfinite(r.ratio))
      os << r.ratio;
    os << '\n';
  }
}

inline void write_errors_csv(const std::vector<ErrorRow> &rows, std::ostream &os) {
  os.precision(17);
  os << "probe,t,x,component,value,std_error,oracle,oracle_error_bar,abs_error,rel_error,"
        "tolerance,within\n";
  for (const auto &r : rows) {
    os << r.probe << ',' << r.t << ',';
    for (std::size_t c = 0; c < r.x.size(); ++c)
      os << (c ? ";" : "") << r.x[c];
    os << ',' << r.component << ',' << r.value << ',' << r.std_error << ',' << r.oracle << ','
       << r.oracle_error_bar << ',' << r.abs_error << ',' << r.rel_error << ',' << r.tolerance
       << ',' << (r.within ? "true" : "false") << '\n';
  }
}

/// Writes report.json, convergence.csv, errors.csv (compare) and oracle grids.
inline void write_outputs(const RunResult &r, const ExperimentConfig &cfg,
                          const std::filesystem::path &dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const std::string &name) {
    std::ofstream f(dir / name);
    if (!f)
      throw Error("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("report.json");
    f << r.report.dump(2) << '\n';
  }
  {
    auto f = open("convergence.csv");
    write_convergence_csv(r.convergence, f);
  }
  if (cfg.mode == Mode::Compare) {
    auto f = open("errors.csv");
    write_errors_csv(r.errors, f);
  }
  for (std::size_t k = 0; k < r.grids.size(); ++k) {
    auto f = open("oracle_grid_" + std::to_string(k) + ".csv");
    const std::size_t stride = std::max<std::size_t>(1, r.grids[k].time.steps / 50);
    write_csv(r.grids[k], f, 0, stride);
  }
}

inline RunResult run(const ExperimentConfig &cfg, const std::filesystem::path &dir) {
  RunResult r = run_experiment(cfg);
  write_outputs(r, cfg, dir);
  return r;
}

} // namespace jumpflow::harness
