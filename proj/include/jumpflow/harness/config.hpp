#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "jumpflow/error.hpp"
#include "jumpflow/harness/registry.hpp"
#include "jumpflow/measure.hpp"
#include "jumpflow/oracle.hpp"
#include "jumpflow/reflected.hpp"

namespace jumpflow::harness {

enum class Mode { Plain, Frozen, Picard, Reflected, Oracle, Compare };

inline const std::map<std::string, Mode> &mode_names() {
  static const std::map<std::string, Mode> names{
      {"plain", Mode::Plain},         {"frozen", Mode::Frozen}, {"picard", Mode::Picard},
      {"reflected", Mode::Reflected}, {"oracle", Mode::Oracle}, {"compare", Mode::Compare}};
  return names;
}

inline std::string to_string(Mode m) {
  for (const auto &[name, mode] : mode_names())
    if (mode == m)
      return name;
  return "?";
}

/// A parsed experiment; unset optional fields fall back to the registered problem.
struct ExperimentConfig {
  std::string problem;
  Mode mode = Mode::Plain;
  std::size_t paths = 0;
  std::size_t steps = 0;
  std::uint64_t seed = 1;
  int degree = 3;
  /// NaN selects the default 2 C^2 (1 + lambda(E) C_beta^2).
  double alpha = std::numeric_limits<double>::quiet_NaN();
  double tol = 1e-8;
  std::size_t max_iter = 50;
  std::string output = "out";

  std::optional<std::vector<Atom>> atoms;
  std::optional<std::vector<std::vector<double>>> starts;
  std::optional<double> horizon;

  std::size_t oracle_nodes = 0;
  std::size_t oracle_time_steps = 0;
  NonlocalVariant variant = NonlocalVariant::Solution;

  ReflectionMode reflection = ReflectionMode::Max;
  double epsilon = 1e-3;
  Compatibility compatibility = Compatibility::TerminalAboveObstacle;
  /// Also solve in penalty mode and report the gap (reflected problems).
  bool cross_check = true;
};

struct ConfigIssue {
  std::size_t line = 0;
  std::string message;

  std::string str() const {
    return line ? "line " + std::to_string(line) + ": " + message : message;
  }
};

struct ValidationResult {
  std::optional<ExperimentConfig> config;
  std::vector<ConfigIssue> errors;

  bool ok() const { return config.has_value(); }
  std::string message() const {
    std::string s;
    for (const auto &e : errors)
      s += (s.empty() ? "" : "\n") + e.str();
    return s;
  }
};

inline std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j)
    prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1])});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline std::string nearest(std::string_view word, const std::vector<std::string> &candidates) {
  std::string best;
  std::size_t best_d = std::numeric_limits<std::size_t>::max();
  for (const auto &c : candidates) {
    const std::size_t d = edit_distance(word, c);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string unquote(const std::string &s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\'')))
    return s.substr(1, s.size() - 2);
  return s;
}

inline std::optional<double> parse_real(const std::string &s) {
  if (s.empty())
    return std::nullopt;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception &) {
    return std::nullopt;
  }
  if (used != s.size())
    return std::nullopt;
  return v;
}

/// Integers may be written as 100000 or 1e5; fractional values are rejected.
inline std::optional<double> parse_integral(const std::string &s) {
  auto v = parse_real(s);
  if (!v || !std::isfinite(*v) || std::floor(*v) != *v)
    return std::nullopt;
  return v;
}

struct Entry {
  std::size_t line;
  std::string value;
};

using Section = std::map<std::string, Entry>;

struct KeySpec {
  std::string help;
  std::function<void(const Entry &, ExperimentConfig &, std::vector<ConfigIssue> &)> apply;
};

using Schema = std::map<std::string, std::map<std::string, KeySpec>>;

inline void fail(std::vector<ConfigIssue> &issues, const Entry &e, std::string msg) {
  issues.push_back({e.line, std::move(msg)});
}

template <class T>
KeySpec count_key(const std::string &name, T ExperimentConfig::*field, double lo,
                  const std::string &help) {
  return {help, [=](const Entry &e, ExperimentConfig &c, std::vector<ConfigIssue> &issues) {
            auto v = parse_integral(e.value);
            if (!v) {
              fail(issues, e, name + ": expected an integer, got '" + e.value + "'");
              return;
            }
            if (*v < lo) {
              std::ostringstream os;
              os << name << " must be ≥ " << lo;
              fail(issues, e, os.str());
              return;
            }
            if (*v > 1e15) {
              fail(issues, e, name + ": value too large");
              return;
            }
            c.*field = static_cast<T>(*v);
          }};
}

inline KeySpec positive_real_key(const std::string &name, double ExperimentConfig::*field,
                                 const std::string &help) {
  return {help, [=](const Entry &e, ExperimentConfig &c, std::vector<ConfigIssue> &issues) {
            auto v = parse_real(e.value);
            if (!v || !std::isfinite(*v)) {
              fail(issues, e, name + ": expected a number, got '" + e.value + "'");
              return;
            }
            if (!(*v > 0.0)) {
              fail(issues, e, name + " must be > 0");
              return;
            }
            c.*field = *v;
          }};
}

template <class T>
KeySpec choice_key(const std::string &name, T ExperimentConfig::*field,
                   std::vector<std::pair<std::string, T>> choices, const std::string &help) {
  return {help, [=](const Entry &e, ExperimentConfig &c, std::vector<ConfigIssue> &issues) {
            const std::string v = unquote(e.value);
            std::vector<std::string> names;
            for (const auto &[n, value] : choices) {
              if (n == v) {
                c.*field = value;
                return;
              }
              names.push_back(n);
            }
            fail(issues, e,
                 name + ": unknown value '" + v + "'; did you mean '" + nearest(v, names) + "'?");
          }};
}

/// Parses a JSON array of numeric arrays, e.g. [[0.3, 1.0], [-0.2, 0.5]].
inline std::optional<std::vector<std::vector<double>>> parse_matrix(const std::string &s,
                                                                   std::string &why) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(s);
  } catch (const nlohmann::json::parse_error &) {
    why = "expected a list like [[a, b], [c, d]]";
    return std::nullopt;
  }
  if (!j.is_array()) {
    why = "expected a list of lists";
    return std::nullopt;
  }
  std::vector<std::vector<double>> out;
  for (const auto &row : j) {
    if (!row.is_array()) {
      why = "expected a list of lists";
      return std::nullopt;
    }
    std::vector<double> r;
    for (const auto &v : row) {
      if (!v.is_number()) {
        why = "entries must be numbers";
        return std::nullopt;
      }
      r.push_back(v.get<double>());
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline const Schema &schema() {
  static const Schema s = [] {
    Schema s;
    auto &ex = s["experiment"];
    ex["problem"] = {"registered problem name (see `jumpflow list`)",
                     [](const Entry &e, ExperimentConfig &c, std::vector<ConfigIssue> &issues) {
                       c.problem = unquote(e.value);
                       if (!registry().count(c.problem)) {
                         std::vector<std::string> names;
                         for (const auto &[n, p] : registry())
                           names.push_back(n);
                         fail(issues, e,
                              "unknown problem '" + c.problem + "'; did you mean '" +
                                  nearest(c.problem, names) + "'?");
                       }
                     }};
    {
      std::vector<std::pair<std::string, Mode>> modes(mode_names().begin(), mode_names().end());
      ex["mode"] = choice_key("mode", &ExperimentConfig::mode, modes,
                              "plain | frozen | picard | reflected | oracle | compare");
    }
    ex["paths"] = count_key("paths", &ExperimentConfig::paths, 1, "Monte-Carlo paths M");
    ex["steps"] = count_key("steps", &ExperimentConfig::steps, 1, "time steps N");
    ex["seed"] = count_key("seed", &ExperimentConfig::seed, 0, "base seed");
    ex["degree"] = count_key("degree", &ExperimentConfig::degree, 0, "regression degree");
    ex["alpha"] = {"alpha-norm weight, or auto",
                   [](const Entry &e, ExperimentConfig &c, std::vector<ConfigIssue> &issues) {
                     if (unquote(e.value) == "auto") {
                       c.alpha = std::numeric_limits<double>::quiet_NaN();
                       return;
                     }
                     auto v = parse_real(e.value);
                     if (!v || !std::isfinite(*v) || *v < 0.0)
                       fail(issues, e, "alpha: expected a number >= 0 or 'auto'");
                     else
                       c.alpha = *v;
                   }};
    ex["tol"] = positive_real_key("tol", &ExperimentConfig::tol, "Picard tolerance");
    ex["max_iter"] = count_key("max_iter", &ExperimentConfig::max_iter, 1, "Picard iteration cap");
    ex["output"] = {"default output directory",
                    [](const Entry &e, ExperimentConfig &c, std::vector<ConfigIssue> &issues) {
                      c.output = unquote(e.value);
                      if (c.output.empty())
                        fail(issues, e, "output must not be empty");
                    }};

    s["levy"]["atoms"] = {
        "[[mark..., weight], ...]",
        [](const Entry &e, ExperimentConfig &c, std::vector<ConfigIssue> &issues) {
          std::string why;
          auto m = parse_matrix(e.value, why);
          if (!m) {
            fail(issues, e, "atoms: " + why);
            return;
          }
          std::vector<Atom> atoms;
          bool good = true;
          for (std::size_t a = 0; a < m->size(); ++a) {
            const auto &row = (*m)[a];
            if (row.size() < 2) {
              fail(issues, e, "atoms: atom " + std::to_string(a) +
                                  " needs a mark and a weight");
              good = false;
              continue;
            }
            Atom atom{{row.begin(), row.end() - 1}, row.back()};
            if (!(atom.weight > 0.0)) {
              fail(issues, e, "atoms: atom " + std::to_string(a) + " weight must be > 0");
              good = false;
            }
            if (std::all_of(atom.mark.begin(), atom.mark.end(), [](double v) { return v == 0.0; })) {
              fail(issues, e, "atoms: atom " + std::to_string(a) + " mark must be nonzero");
              good = false;
            }
            atoms.push_back(std::move(atom));
          }
          if (good)
            c.atoms = std::move(atoms);
        }};

    auto &pr = s["problem"];
    pr["starts"] = {"probe start points [[x...], ...]",
                    [](const Entry &e, ExperimentConfig &c, std::vector<ConfigIssue> &issues) {
                      std::string why;
                      auto m = parse_matrix(e.value, why);
                      if (!m)
                        fail(issues, e, "starts: " + why);
                      else if (m->empty())
                        fail(issues, e, "starts: at least one start point is required");
                      else
                        c.starts = std::move(*m);
                    }};
    pr["horizon"] = {"terminal time T",
                     [](const Entry &e, ExperimentConfig &c, std::vector<ConfigIssue> &issues) {
                       auto v = parse_real(e.value);
                       if (!v || !std::isfinite(*v))
                         fail(issues, e, "horizon: expected a number, got '" + e.value + "'");
                       else
                         c.horizon = *v;
                     }};

    auto &orc = s["oracle"];
    orc["nodes"] = count_key("nodes", &ExperimentConfig::oracle_nodes, 5, "spatial nodes");
    orc["time_steps"] =
        count_key("time_steps", &ExperimentConfig::oracle_time_steps, 2, "oracle time steps");
    orc["variant"] = choice_key<NonlocalVariant>(
        "variant", &ExperimentConfig::variant,
        {{"solution", NonlocalVariant::Solution}, {"test_function", NonlocalVariant::TestFunction}},
        "solution | test_function");

    auto &rf = s["reflection"];
    rf["mode"] = choice_key<ReflectionMode>(
        "mode", &ExperimentConfig::reflection,
        {{"max", ReflectionMode::Max}, {"penalty", ReflectionMode::Penalty}}, "max | penalty");
    rf["epsilon"] = positive_real_key("epsilon", &ExperimentConfig::epsilon, "penalty epsilon");
    rf["compatibility"] = choice_key<Compatibility>(
        "compatibility", &ExperimentConfig::compatibility,
        {{"terminal_above", Compatibility::TerminalAboveObstacle},
         {"obstacle_above", Compatibility::ObstacleAboveTerminal}},
        "terminal_above | obstacle_above");
    rf["cross_check"] = choice_key<bool>("cross_check", &ExperimentConfig::cross_check,
                                         {{"true", true}, {"false", false}}, "true | false");
    return s;
  }();
  return s;
}

} // namespace detail

/// Checks a (parsed or overridden) config against its problem; appends issues.
inline void check_combination(const ExperimentConfig &c, std::vector<ConfigIssue> &issues,
                              std::size_t mode_line = 0, std::size_t problem_line = 0) {
  if (c.paths < 1)
    issues.push_back({0, "paths must be ≥ 1"});
  if (c.steps < 1)
    issues.push_back({0, "steps must be ≥ 1"});
  if (c.degree > 15)
    issues.push_back({0, "degree must be ≤ 15"});
  auto it = registry().find(c.problem);
  if (it == registry().end())
    return;
  const ProblemSpec &p = it->second;
  const bool obstacle = p.obstacle.has_value();
  switch (c.mode) {
  case Mode::Plain:
  case Mode::Frozen:
  case Mode::Picard:
    if (obstacle)
      issues.push_back({mode_line, "mode '" + to_string(c.mode) + "' is invalid for '" +
                                       c.problem + "', which has an obstacle (use reflected)"});
    break;
  case Mode::Reflected:
    if (!obstacle)
      issues.push_back({mode_line, "mode 'reflected' needs a problem with an obstacle; '" +
                                       c.problem + "' has none"});
    break;
  case Mode::Oracle:
  case Mode::Compare:
    if (p.state_dim() != 1)
      issues.push_back({mode_line, "mode '" + to_string(c.mode) +
                                       "' needs a one-dimensional state; '" + c.problem +
                                       "' has dimension " + std::to_string(p.state_dim())});
    break;
  }
  if (c.atoms)
    for (std::size_t a = 0; a < c.atoms->size(); ++a)
      if ((*c.atoms)[a].mark.size() != p.measure.mark_dim())
        issues.push_back({problem_line, "atoms: atom " + std::to_string(a) + " has mark dimension " +
                                            std::to_string((*c.atoms)[a].mark.size()) +
                                            ", problem expects " +
                                            std::to_string(p.measure.mark_dim())});
  if (c.starts)
    for (const auto &x : *c.starts)
      if (x.size() != p.state_dim())
        issues.push_back({problem_line, "starts: point of dimension " + std::to_string(x.size()) +
                                            ", problem expects " + std::to_string(p.state_dim())});
  if (c.horizon && !(*c.horizon > p.t_start))
    issues.push_back({problem_line, "horizon must exceed the start time"});
}

/**
 * Full parse of the sectioned key = value format. Every malformed line or
 * field yields its own line-anchored issue; on any issue no config is
 * returned. Omitted fields take the registered problem's defaults.
 */
inline ValidationResult validate_config(const std::string &text) {
  using namespace detail;
  ValidationResult result;
  auto &issues = result.errors;
  const Schema &sch = schema();
  std::vector<std::string> section_names;
  for (const auto &[n, keys] : sch)
    section_names.push_back(n);

  std::map<std::string, Section> sections;
  std::string current;
  bool current_known = false;
  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty())
      continue;
    if (s.front() == '[' && s.find('=') == std::string::npos) {
      if (s.back() != ']') {
        issues.push_back({line, "malformed section header '" + s + "'"});
        current_known = false;
        continue;
      }
      current = trim(s.substr(1, s.size() - 2));
      current_known = sch.count(current) > 0;
      if (!current_known)
        issues.push_back({line, "unknown section [" + current + "]; did you mean [" +
                                    nearest(current, section_names) + "]?"});
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      issues.push_back({line, "expected 'key = value', got '" + s + "'"});
      continue;
    }
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (current.empty()) {
      issues.push_back({line, "key '" + key + "' appears before any [section]"});
      continue;
    }
    if (!current_known)
      continue;
    const auto &keys = sch.at(current);
    if (!keys.count(key)) {
      std::vector<std::string> names;
      for (const auto &[n, spec] : keys)
        names.push_back(n);
      issues.push_back({line, "unknown key '" + key + "' in [" + current + "]; did you mean '" +
                                  nearest(key, names) + "'?"});
      continue;
    }
    if (value.empty()) {
      issues.push_back({line, key + ": missing value"});
      continue;
    }
    auto &sec = sections[current];
    if (auto prev = sec.find(key); prev != sec.end()) {
      issues.push_back({line, "duplicate key '" + key + "' (first set on line " +
                                  std::to_string(prev->second.line) + ")"});
      continue;
    }
    sec.emplace(key, Entry{line, value});
  }

  const auto &exp = sections["experiment"];
  if (!exp.count("problem"))
    issues.push_back({0, "missing required key 'problem' in [experiment]"});
  if (!exp.count("mode"))
    issues.push_back({0, "missing required key 'mode' in [experiment]"});

  ExperimentConfig cfg;
  // problem first, so its defaults can be filled before explicit keys apply
  if (auto it = exp.find("problem"); it != exp.end()) {
    sch.at("experiment").at("problem").apply(it->second, cfg, issues);
    if (auto p = registry().find(cfg.problem); p != registry().end()) {
      cfg.paths = p->second.default_paths;
      cfg.steps = p->second.default_steps;
      cfg.degree = p->second.default_degree;
      cfg.oracle_nodes = p->second.oracle_nodes;
      cfg.oracle_time_steps = p->second.oracle_time_steps;
    }
  }
  for (const auto &[sec_name, entries] : sections)
    for (const auto &[key, entry] : entries)
      if (!(sec_name == "experiment" && key == "problem"))
        sch.at(sec_name).at(key).apply(entry, cfg, issues);
  if (issues.empty()) {
    auto line_of = [&](const char *k) {
      auto it = exp.find(k);
      return it == exp.end() ? std::size_t{0} : it->second.line;
    };
    std::size_t problem_line = 0;
    for (const char *sec : {"levy", "problem"})
      for (const auto &[k, e] : sections[sec])
        problem_line = problem_line ? problem_line : e.line;
    check_combination(cfg, issues, line_of("mode"), problem_line);
  }
  std::stable_sort(issues.begin(), issues.end(),
                   [](const ConfigIssue &a, const ConfigIssue &b) { return a.line < b.line; });
  if (issues.empty())
    result.config = std::move(cfg);
  return result;
}

/// validate_config that throws ConfigError listing every issue.
inline ExperimentConfig parse_config(const std::string &text) {
  auto r = validate_config(text);
  if (!r.ok())
    throw ConfigError(r.message());
  return *r.config;
}

/// The registered problem with the config's overrides applied.
inline ProblemSpec resolve_problem(const ExperimentConfig &c) {
  ProblemSpec p = find_problem(c.problem);
  if (c.atoms)
    p.measure = LevyMeasure(p.measure.mark_dim(), *c.atoms);
  if (c.starts)
    p.starts = *c.starts;
  if (c.horizon)
    p.horizon = *c.horizon;
  if (p.obstacle)
    p.obstacle->compatibility = c.compatibility;
  p.default_paths = c.paths;
  p.default_steps = c.steps;
  p.default_degree = c.degree;
  p.oracle_nodes = c.oracle_nodes;
  p.oracle_time_steps = c.oracle_time_steps;
  return p;
}

inline nlohmann::json to_json(const ExperimentConfig &c) {
  nlohmann::json j;
  j["problem"] = c.problem;
  j["mode"] = to_string(c.mode);
  j["paths"] = c.paths;
  j["steps"] = c.steps;
  j["seed"] = c.seed;
  j["degree"] = c.degree;
  if (std::isnan(c.alpha))
    j["alpha"] = "auto";
  else
    j["alpha"] = c.alpha;
  j["tol"] = c.tol;
  j["max_iter"] = c.max_iter;
  if (c.atoms) {
    auto &a = j["atoms"] = nlohmann::json::array();
    for (const auto &atom : *c.atoms) {
      auto row = nlohmann::json(atom.mark);
      row.push_back(atom.weight);
      a.push_back(row);
    }
  }
  if (c.starts)
    j["starts"] = *c.starts;
  if (c.horizon)
    j["horizon"] = *c.horizon;
  j["oracle"] = {{"nodes", c.oracle_nodes},
                 {"time_steps", c.oracle_time_steps},
                 {"variant", c.variant == NonlocalVariant::Solution ? "solution" : "test_function"}};
  j["reflection"] = {
      {"mode", c.reflection == ReflectionMode::Max ? "max" : "penalty"},
      {"epsilon", c.epsilon},
      {"compatibility", c.compatibility == Compatibility::TerminalAboveObstacle
                            ? "terminal_above"
                            : "obstacle_above"},
      {"cross_check", c.cross_check}};
  return j;
}

} // namespace jumpflow::harness
