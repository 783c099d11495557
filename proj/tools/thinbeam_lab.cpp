// thinbeam_lab: command-line front end for the thin-strip experiments.
//
//   thinbeam_lab <subcommand> --config FILE [--out DIR] [--seed N]
//
// exit codes: 0 ok, 1 non-convergence, 2 configuration error, 3 diagnostic failure

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "thinbeam/lab.hpp"

namespace {

using Runner = std::function<thinbeam::RunManifest(const thinbeam::ExperimentConfig &, const std::string &)>;

// Best effort: a run that throws still leaves a manifest describing why.
void write_failure_manifest(const std::string &dir, const std::string &command, const std::string &hash,
                            std::uint64_t seed, int code, const std::string &what) {
  if (dir.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) return;
  thinbeam::RunManifest m;
  m.command = command;
  m.config_hash = hash;
  m.seed = seed;
  m.fail(code, what);
  m.message = what;
  std::ofstream(std::filesystem::path(dir) / "manifest.json") << m.to_json().dump(2) << '\n';
}

int run(const std::string &command, const Runner &runner, const std::string &config_path, const std::string &out,
        std::optional<std::uint64_t> seed) {
  thinbeam::ExperimentConfig cfg;
  try {
    cfg = thinbeam::load_experiment(config_path, seed);
  } catch (const thinbeam::ConfigError &e) {
    std::cerr << "config error: " << e.what() << '\n';
    return thinbeam::kExitConfig;
  }
  const std::string dir = out.empty() ? cfg.out_dir : out;
  auto fail = [&](int code, const char *kind, const std::exception &e) {
    std::cerr << kind << ": " << e.what() << '\n';
    write_failure_manifest(dir, command, cfg.raw.hash_hex(), cfg.seed, code, e.what());
    return code;
  };
  try {
    const thinbeam::RunManifest m = runner(cfg, dir);
    for (const auto &f : m.failures) std::cerr << command << ": " << f << '\n';
    std::cout << command << ": " << (m.ok() ? "ok" : "failed") << " (" << dir << "/manifest.json)\n";
    return m.exit_code;
  } catch (const thinbeam::ConfigError &e) {
    return fail(thinbeam::kExitConfig, "config error", e);
  } catch (const thinbeam::SolverError &e) {
    return fail(thinbeam::kExitNonConvergence, "solver error", e);
  } catch (const thinbeam::DiagnosticError &e) {
    return fail(thinbeam::kExitDiagnostic, "diagnostic error", e);
  } catch (const thinbeam::TruncationError &e) {
    return fail(thinbeam::kExitDiagnostic, "truncation error", e);
  } catch (const thinbeam::DomainError &e) {
    return fail(thinbeam::kExitDiagnostic, "domain error", e);
  }
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Thin elastic strip experiments: strip solver, elastica limit, diagnostics, truncation"};
  app.require_subcommand(1);

  const std::map<std::string, std::pair<std::string, Runner>> commands{
      {"solve-strip", {"Solve the clamped strip at strip.h", thinbeam::run_solve_strip}},
      {"solve-elastica", {"Solve the limiting elastica", thinbeam::run_solve_elastica}},
      {"diagnose", {"Solve (or read) a strip solution and write its diagnostics", thinbeam::run_diagnose}},
      {"converge", {"Sweep sweep.h and tabulate convergence to the elastica", thinbeam::run_convergence}},
      {"truncate", {"Run the seeded thin-domain truncation sweep", thinbeam::run_truncation_demo}},
      {"energy-check", {"Sample the structural hypotheses of energy.kind", thinbeam::run_energy_check}},
  };

  std::string config_path, out;
  long long seed_value = -1;
  for (const auto &[name, entry] : commands) {
    CLI::App *sub = app.add_subcommand(name, entry.first);
    sub->add_option("--config,-c", config_path, "Experiment configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out,-o", out, "Output directory (overrides output.dir)");
    sub->add_option("--seed", seed_value, "Seed (overrides run.seed)")->check(CLI::NonNegativeNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : thinbeam::kExitConfig;
  }

  for (const auto &[name, entry] : commands)
    if (app.got_subcommand(name)) {
      std::optional<std::uint64_t> seed;
      if (seed_value >= 0) seed = static_cast<std::uint64_t>(seed_value);
      return run(name, entry.second, config_path, out, seed);
    }
  return thinbeam::kExitConfig;
}
