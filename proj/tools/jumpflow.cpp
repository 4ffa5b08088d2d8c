// jumpflow command line: run / list / validate
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "jumpflow/jumpflow.hpp"

namespace jh = jumpflow::harness;

namespace {

std::string read_file(const std::string &path) {
  std::ifstream f(path);
  if (!f)
    throw jumpflow::ConfigError("cannot read config '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// errors go to stderr as one JSON object
int fail(const std::string &kind, const std::string &message) {
  nlohmann::json j{{"error", kind}, {"message", message}};
  std::cerr << j.dump() << '\n';
  return kind == "config" ? 2 : 1;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"jumpflow: nonlocal BSDE / PIDE solvers with jumps"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> paths, steps;
  auto *run = app.add_subcommand("run", "run an experiment");
  run->add_option("--config", config_path, "config file")->required();
  run->add_option("--out", out_dir, "output directory (default: [experiment] output)");
  run->add_option("--seed", seed, "override the seed");
  run->add_option("--paths", paths, "override paths M");
  run->add_option("--steps", steps, "override steps N");

  auto *list = app.add_subcommand("list", "list registered problems");
  bool as_json = false;
  list->add_flag("--json", as_json, "machine-readable listing");

  std::string validate_path;
  auto *validate = app.add_subcommand("validate", "check a config file");
  validate->add_option("--config", validate_path, "config file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*list) {
      const auto problems = jh::list_problems();
      if (as_json) {
        nlohmann::json j = nlohmann::json::array();
        for (const auto &p : problems)
          j.push_back({{"name", p.name},
                       {"state_dim", p.state_dim},
                       {"brownian_dim", p.brownian_dim},
                       {"components", p.components},
                       {"atoms", p.atoms},
                       {"obstacle", p.obstacle},
                       {"stresses", p.stresses},
                       {"description", p.description}});
        std::cout << j.dump(2) << '\n';
      } else {
        for (const auto &p : problems) {
          std::cout << p.name << "  k=" << p.state_dim << " d=" << p.brownian_dim
                    << " m=" << p.components << " atoms=" << p.atoms << "  [";
          for (std::size_t s = 0; s < p.stresses.size(); ++s)
            std::cout << (s ? ", " : "") << p.stresses[s];
          std::cout << "]\n    " << p.description << '\n';
        }
      }
      return 0;
    }

    if (*validate) {
      const auto r = jh::validate_config(read_file(validate_path));
      if (!r.ok()) {
        std::cerr << r.message() << '\n';
        return 2;
      }
      std::cout << jh::to_json(*r.config).dump(2) << '\n';
      return 0;
    }

    auto parsed = jh::validate_config(read_file(config_path));
    if (!parsed.ok())
      return fail("config", parsed.message());
    jh::ExperimentConfig cfg = *parsed.config;
    if (seed)
      cfg.seed = *seed;
    if (paths)
      cfg.paths = *paths;
    if (steps)
      cfg.steps = *steps;
    const std::string dir = out_dir.empty() ? cfg.output : out_dir;
    const auto result = jh::run(cfg, dir);
    const auto &rep = result.report;
    for (const auto &probe : rep["probes"])
      for (const auto &c : probe["components"]) {
        std::cout << "probe " << probe["index"] << " x=" << probe["x"].dump() << " u"
                  << c["component"] << " = " << c["value"];
        if (c["std_error"].is_number())
          std::cout << " +- " << c["std_error"];
        else
          std::cout << " (deterministic)";
        std::cout << '\n';
      }
    if (rep.contains("comparison"))
      std::cout << "max relative error vs oracle: " << rep["comparison"]["max_rel_error"]
                << '\n';
    std::cout << "wrote " << dir << "/report.json\n";
    return 0;
  } catch (const jumpflow::ConfigError &e) {
    return fail("config", e.what());
  } catch (const jumpflow::SimulationError &e) {
    return fail("simulation", e.what());
  } catch (const jumpflow::RegressionError &e) {
    return fail("regression", e.what());
  } catch (const jumpflow::EvaluationError &e) {
    return fail("evaluation", e.what());
  } catch (const jumpflow::IntegrationError &e) {
    return fail("integration", e.what());
  } catch (const jumpflow::BoundError &e) {
    return fail("bound", e.what());
  } catch (const std::exception &e) {
    return fail("runtime", e.what());
  }
}
