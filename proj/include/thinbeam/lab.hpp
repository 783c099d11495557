#pragma once

// Experiment orchestration behind the thinbeam_lab subcommands: typed
// configuration, CSV output, the run manifest, and one driver per subcommand.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <type_traits>
#include <utility>
#include <vector>

#include <json.hpp>

#include "thinbeam/config.hpp"
#include "thinbeam/diagnostics.hpp"
#include "thinbeam/elastica.hpp"
#include "thinbeam/energy.hpp"
#include "thinbeam/energy_checks.hpp"
#include "thinbeam/errors.hpp"
#include "thinbeam/load.hpp"
#include "thinbeam/strip.hpp"
#include "thinbeam/truncation.hpp"

namespace thinbeam {

enum ExitCode : int { kExitOk = 0, kExitNonConvergence = 1, kExitConfig = 2, kExitDiagnostic = 3 };

struct TruncationSettings {
  double a = 5.0;
  double A = 15.0;
  double p = 2.0;
  int fields = 50;
  std::vector<int> cells_x{64, 128, 256};
  std::vector<int> cells_y{8, 16, 32};
  bool widen = true;  // also run (a/2, 2A)
  RoughFieldSpec field;
  std::string input;  // optional grid CSV to truncate instead of the sweep
};

struct ExperimentConfig {
  Config raw;
  double L = 1.0;
  EnergyDensity energy = EnergyDensity::half_dist_squared();
  LoadProfile load = LoadProfile::constant({0.0, 0.0});
  std::vector<double> h_list{0.2, 0.1, 0.05, 0.025};
  double strip_h = 0.05;
  int strip_nx = 0;  // 0: mesh rule
  int strip_ny = 8;
  double mesh_factor = 16.0;
  int min_nx = 64;
  SolverConfig solver;
  int elastica_n = 1280;
  double elastica_tol = 1e-12;
  std::optional<double> elastica_E;
  std::string out_dir = "out";
  std::uint64_t seed = 1000;
  TruncationSettings truncation;
  int energy_samples = 1000;
  std::string solution_path;  // diagnose: read this solution instead of solving

  double modulus() const { return elastica_E ? *elastica_E : linearize(energy).modulus; }

  /// nx = max(min_nx, ceil(mesh_factor L / h)) unless strip.nx is given.
  StripMesh mesh_for(double h) const {
    const int nx = strip_nx > 0 ? strip_nx
                                : std::max(min_nx, static_cast<int>(std::ceil(mesh_factor * L / h - 1e-9)));
    return build_mesh(L, nx, strip_ny);
  }
};

namespace detail {

inline std::vector<int> int_list(const Config &c, const std::string &key, const std::vector<int> &fallback) {
  if (!c.has(key)) return fallback;
  std::vector<int> out;
  for (double v : c.get_list(key, {})) {
    if (v != std::floor(v) || v < 1) throw ConfigError(key + ": expected positive integers");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

inline LoadProfile parse_load(const Config &c, double L) {
  const std::string kind = c.get_string("load.kind", "constant");
  LoadProfile p;
  if (kind == "constant") {
    p = LoadProfile::constant({c.get_double("load.g1", 0.0), c.get_double("load.g2", 0.0)});
  } else if (kind == "samples") {
    const auto x = c.get_list("load.x", {});
    const auto g1 = c.get_list("load.g1", {});
    const auto g2 = c.get_list("load.g2", {});
    if (x.size() != g1.size() || x.size() != g2.size())
      throw ConfigError("load.x, load.g1 and load.g2 must have the same length");
    std::vector<Vec2> v;
    for (std::size_t i = 0; i < x.size(); ++i) v.push_back({g1[i], g2[i]});
    p = LoadProfile::samples(x, v);
  } else {
    throw ConfigError("load.kind must be 'constant' or 'samples', got '" + kind + "'");
  }
  if (!p.covers(L)) throw ConfigError("load samples (load.x) must cover [0, strip.L]");
  return p;
}

inline EnergyDensity parse_energy(const Config &c) {
  const std::string kind = c.get_string("energy.kind", "half-dist-squared");
  if (kind == "half-dist-squared") return EnergyDensity::half_dist_squared();
  if (kind == "isotropic-quadratic")
    return EnergyDensity::isotropic_quadratic(c.get_double("energy.mu", 0.5), c.get_double("energy.lambda", 0.0));
  throw ConfigError("energy.kind must be 'half-dist-squared' or 'isotropic-quadratic', got '" + kind + "'");
}

}  // namespace detail

inline ExperimentConfig parse_experiment(const Config &c) {
  ExperimentConfig x;
  x.raw = c;
  x.L = c.get_double("strip.L", 1.0);
  if (!(x.L > 0.0)) throw ConfigError("strip.L must be positive");
  x.energy = detail::parse_energy(c);
  x.load = detail::parse_load(c, x.L);

  x.h_list = c.get_list("sweep.h", x.h_list);
  for (std::size_t i = 0; i < x.h_list.size(); ++i) {
    if (!(x.h_list[i] > 0.0 && x.h_list[i] <= 0.5)) throw ConfigError("sweep.h entries must lie in (0, 0.5]");
    if (i > 0 && !(x.h_list[i] < x.h_list[i - 1])) throw ConfigError("sweep.h must be strictly decreasing");
  }
  x.strip_h = c.get_double("strip.h", x.strip_h);
  if (!(x.strip_h > 0.0 && x.strip_h <= 0.5)) throw ConfigError("strip.h must lie in (0, 0.5]");
  x.strip_nx = static_cast<int>(c.get_int("strip.nx", 0));
  x.strip_ny = static_cast<int>(c.get_int("strip.ny", 8));
  x.mesh_factor = c.get_double("strip.mesh_factor", x.mesh_factor);
  x.min_nx = static_cast<int>(c.get_int("strip.min_nx", x.min_nx));
  if (x.strip_nx != 0 && x.strip_nx < 4) throw ConfigError("strip.nx must be >= 4 (or 0 for the mesh rule)");
  if (x.strip_ny < 2) throw ConfigError("strip.ny must be >= 2");
  if (!(x.mesh_factor >= 4.0)) throw ConfigError("strip.mesh_factor must be >= 4");
  if (x.min_nx < 4) throw ConfigError("strip.min_nx must be >= 4");

  x.solver.newton_tol = c.get_double("solver.newton_tol", x.solver.newton_tol);
  x.solver.max_iters = static_cast<int>(c.get_int("solver.max_iters", x.solver.max_iters));
  x.solver.load_steps = static_cast<int>(c.get_int("solver.load_steps", x.solver.load_steps));
  if (!(x.solver.newton_tol > 0.0)) throw ConfigError("solver.newton_tol must be positive");
  if (x.solver.max_iters < 1 || x.solver.load_steps < 1)
    throw ConfigError("solver.max_iters and solver.load_steps must be >= 1");

  x.elastica_n = static_cast<int>(c.get_int("elastica.n", x.elastica_n));
  x.elastica_tol = c.get_double("elastica.tol", x.elastica_tol);
  if (x.elastica_n < 32) throw ConfigError("elastica.n must be >= 32");
  if (!(x.elastica_tol > 0.0)) throw ConfigError("elastica.tol must be positive");
  if (c.has("elastica.E")) {
    x.elastica_E = c.get_double("elastica.E", 1.0);
    if (!(*x.elastica_E > 0.0)) throw ConfigError("elastica.E must be positive");
  }

  x.out_dir = c.get_string("output.dir", x.out_dir);
  const long long seed = c.get_int("run.seed", static_cast<long long>(x.seed));
  if (seed < 0) throw ConfigError("run.seed must be non-negative");
  x.seed = static_cast<std::uint64_t>(seed);

  TruncationSettings &t = x.truncation;
  t.a = c.get_double("truncation.a", t.a);
  t.A = c.get_double("truncation.A", t.A);
  t.p = c.get_double("truncation.p", t.p);
  if (!(t.a > 0.0) || !(t.a < t.A)) throw ConfigError("truncation.a and truncation.A need 0 < a < A");
  if (!(t.p > 1.0)) throw ConfigError("truncation.p must exceed 1");
  t.fields = static_cast<int>(c.get_int("truncation.fields", t.fields));
  if (t.fields < 1) throw ConfigError("truncation.fields must be >= 1");
  t.cells_x = detail::int_list(c, "truncation.cells_x", t.cells_x);
  t.cells_y = detail::int_list(c, "truncation.cells_y", t.cells_y);
  if (t.cells_x.size() != t.cells_y.size()) throw ConfigError("truncation.cells_x and truncation.cells_y differ in length");
  t.widen = c.get_bool("truncation.widen", t.widen);
  t.field.L = c.get_double("truncation.L", t.field.L);
  t.field.h = c.get_double("truncation.h", t.field.h);
  t.field.mean_gradient = c.get_double("truncation.mean_gradient", t.field.mean_gradient);
  t.field.sigma_lo = c.get_double("truncation.sigma_lo", t.field.sigma_lo);
  t.field.sigma_hi = c.get_double("truncation.sigma_hi", t.field.sigma_hi);
  t.field.background = c.get_double("truncation.background", t.field.background);
  const std::string kind = c.get_string("truncation.field", "rough");
  if (kind != "rough" && kind != "smooth") throw ConfigError("truncation.field must be 'rough' or 'smooth'");
  t.field.with_bump = kind == "rough";
  t.input = c.get_string("truncation.input", "");

  x.energy_samples = static_cast<int>(c.get_int("energy_check.samples", x.energy_samples));
  if (x.energy_samples < 10) throw ConfigError("energy_check.samples must be >= 10");
  x.solution_path = c.get_string("diagnose.solution", "");
  return x;
}

/// Applies command-line overrides, then parses.
inline ExperimentConfig load_experiment(const std::string &path, std::optional<std::uint64_t> seed = std::nullopt) {
  Config c = Config::load(path);
  if (seed) c.set("run.seed", std::to_string(*seed));
  return parse_experiment(c);
}

// ---------------------------------------------------------------- output

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Short form for labels and messages.
inline std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path &path, const std::vector<std::string> &header) : os_(path) {
    if (!os_) throw ConfigError("cannot write '" + path.string() + "'");
    row_text(header);
  }
  void row(const std::vector<double> &values) {
    std::vector<std::string> s;
    for (double v : values) s.push_back(fmt(v));
    row_text(s);
  }
  void row_text(const std::vector<std::string> &cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os_ << (i ? "," : "") << cells[i];
    os_ << '\n';
  }

 private:
  std::ofstream os_;
};

class KeyValueCsv {
 public:
  void add(const std::string &k, double v) { rows_.emplace_back(k, fmt(v)); }
  void add(const std::string &k, const std::string &v) { rows_.emplace_back(k, v); }
  void write(const std::filesystem::path &path) const {
    CsvWriter w(path, {"key", "value"});
    for (const auto &[k, v] : rows_) w.row_text({k, v});
  }

 private:
  std::vector<std::pair<std::string, std::string>> rows_;
};

struct RunManifest {
  std::string command;
  int exit_code = kExitOk;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;
  std::vector<std::pair<std::string, double>> timings;  // seconds
  std::vector<std::string> failures;
  std::string message;

  bool ok() const { return exit_code == kExitOk; }
  void fail(int code, const std::string &what) {
    if (exit_code == kExitOk || code < exit_code) exit_code = code;
    failures.push_back(what);
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["command"] = command;
    j["status"] = ok() ? "ok" : "failed";
    j["exit_code"] = exit_code;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["outputs"] = outputs;
    nlohmann::json t = nlohmann::json::object();
    for (const auto &[k, v] : timings) t[k] = v;
    j["timings_s"] = t;
    j["failures"] = failures;
    j["message"] = message;
    return j;
  }
};

namespace detail {

class RunContext {
 public:
  RunContext(const std::string &command, const ExperimentConfig &cfg, const std::string &out_dir)
      : dir_(out_dir.empty() ? cfg.out_dir : out_dir), start_(std::chrono::steady_clock::now()) {
    m_.command = command;
    m_.config_hash = cfg.raw.hash_hex();
    m_.seed = cfg.seed;
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw ConfigError("cannot create output directory '" + dir_.string() + "': " + ec.message());
  }

  std::filesystem::path file(const std::string &name) {
    m_.outputs.push_back(name);
    return dir_ / name;
  }

  template <class F>
  auto timed(const std::string &label, F &&f) {
    const auto t0 = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      m_.timings.emplace_back(label, seconds_since(t0));
    } else {
      auto r = f();
      m_.timings.emplace_back(label, seconds_since(t0));
      return r;
    }
  }

  RunManifest &manifest() { return m_; }

  /// Records total time, checks declared outputs exist and writes manifest.json.
  RunManifest finish() {
    m_.timings.emplace_back("total", seconds_since(start_));
    if (m_.ok())
      for (const auto &o : m_.outputs)
        if (!std::filesystem::exists(dir_ / o)) m_.fail(kExitDiagnostic, "declared output missing: " + o);
    std::ofstream os(dir_ / "manifest.json");
    os << m_.to_json().dump(2) << '\n';
    return m_;
  }

 private:
  static double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  std::filesystem::path dir_;
  std::chrono::steady_clock::time_point start_;
  RunManifest m_;
};

inline void write_solution_csv(const std::filesystem::path &path, const DeformationField &y) {
  CsvWriter w(path, {"node_id", "x1", "x2", "y1", "y2"});
  for (int n = 0; n < y.mesh.num_nodes(); ++n) {
    const Vec2 p = y.mesh.position(n), q = y.y(n);
    w.row({static_cast<double>(n), p.x, p.y, q.x, q.y});
  }
}

inline void write_elastica_csv(const std::filesystem::path &path, const ElasticaSolution &s) {
  CsvWriter w(path, {"x1", "theta", "kappa", "ybar1", "ybar2"});
  for (std::size_t k = 0; k < s.x.size(); ++k) w.row({s.x[k], s.theta[k], s.kappa[k], s.ybar[k].x, s.ybar[k].y});
}

inline void write_report_csv(const std::filesystem::path &path, const StripMesh &m, double h,
                             const SolverReport &r) {
  KeyValueCsv kv;
  kv.add("converged", r.converged ? 1.0 : 0.0);
  kv.add("iterations", static_cast<double>(r.iterations));
  kv.add("residual", r.residual);
  kv.add("elastic", r.elastic);
  kv.add("total", r.total);
  kv.add("energy_over_h2", r.elastic / (h * h));
  kv.add("h", h);
  kv.add("L", m.L);
  kv.add("nx", static_cast<double>(m.nx));
  kv.add("ny", static_cast<double>(m.ny));
  kv.add("message", r.message);
  kv.write(path);
}

inline void write_path_csv(const std::filesystem::path &path, const SolverReport &r) {
  CsvWriter w(path, {"step", "parameter", "iterations"});
  for (std::size_t i = 0; i < r.path.size(); ++i)
    w.row({static_cast<double>(i), r.path[i].first, static_cast<double>(r.path[i].second)});
}

}  // namespace detail

/// Reads a `node_id,x1,x2,y1,y2` file written for `mesh`.
inline DeformationField read_solution_csv(const std::string &path, const StripMesh &mesh, double h) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open solution file '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "node_id,x1,x2,y1,y2")
    throw ConfigError(path + ": expected header node_id,x1,x2,y1,y2");
  std::vector<Vec2> y(mesh.num_nodes());
  std::vector<char> seen(mesh.num_nodes(), 0);
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    double v[5];
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf", &v[0], &v[1], &v[2], &v[3], &v[4]) != 5)
      throw ConfigError(path + ": malformed row '" + line + "'");
    const int n = static_cast<int>(v[0]);
    if (n < 0 || n >= mesh.num_nodes() || seen[n]) throw ConfigError(path + ": bad node id " + std::to_string(n));
    const Vec2 p = mesh.position(n);
    if (std::abs(p.x - v[1]) > 1e-9 || std::abs(p.y - v[2]) > 1e-9)
      throw ConfigError(path + ": node " + std::to_string(n) + " does not match the configured mesh");
    y[n] = {v[3], v[4]};
    seen[n] = 1;
  }
  for (char s : seen)
    if (!s) throw ConfigError(path + ": solution does not cover every node of the configured mesh");
  return DeformationField::from_positions(mesh, h, y);
}

// ---------------------------------------------------------------- drivers

inline RunManifest run_solve_strip(const ExperimentConfig &cfg, const std::string &out = "") {
  detail::RunContext ctx("solve-strip", cfg, out);
  const StripMesh mesh = cfg.mesh_for(cfg.strip_h);
  const StripSolution sol = ctx.timed("solve", [&] { return solve_stationary(mesh, cfg.strip_h, cfg.load, cfg.energy, cfg.solver); });
  detail::write_solution_csv(ctx.file("solution.csv"), sol.field);
  detail::write_report_csv(ctx.file("report.csv"), mesh, cfg.strip_h, sol.report);
  detail::write_path_csv(ctx.file("path.csv"), sol.report);
  if (!sol.report.converged) ctx.manifest().fail(kExitNonConvergence, "h=" + fmt_short(cfg.strip_h) + ": " + sol.report.message);
  ctx.manifest().message = sol.report.message;
  return ctx.finish();
}

inline RunManifest run_solve_elastica(const ExperimentConfig &cfg, const std::string &out = "") {
  detail::RunContext ctx("solve-elastica", cfg, out);
  const double E = cfg.modulus();
  const ElasticaSolution s =
      ctx.timed("solve", [&] { return solve_elastica(E, cfg.load, cfg.L, cfg.elastica_n, cfg.elastica_tol); });
  detail::write_elastica_csv(ctx.file("elastica.csv"), s);
  KeyValueCsv kv;
  kv.add("converged", s.converged ? 1.0 : 0.0);
  kv.add("iterations", static_cast<double>(s.iterations));
  kv.add("residual", s.residual);
  kv.add("J2", s.J2);
  kv.add("E", E);
  kv.add("n", static_cast<double>(s.n()));
  kv.add("tip_theta", s.theta.back());
  kv.add("tip_y1", s.ybar.back().x);
  kv.add("tip_y2", s.ybar.back().y);
  kv.write(ctx.file("report.csv"));
  return ctx.finish();
}

inline RunManifest run_diagnose(const ExperimentConfig &cfg, const std::string &out = "") {
  detail::RunContext ctx("diagnose", cfg, out);
  const double h = cfg.strip_h;
  const StripMesh mesh = cfg.mesh_for(h);
  DeformationField y = DeformationField::rigid(mesh, h);
  if (!cfg.solution_path.empty()) {
    y = read_solution_csv(cfg.solution_path, mesh, h);
  } else {
    const StripSolution sol = ctx.timed("solve", [&] { return solve_stationary(mesh, h, cfg.load, cfg.energy, cfg.solver); });
    if (!sol.report.converged) {
      ctx.manifest().fail(kExitNonConvergence, "h=" + fmt_short(h) + ": " + sol.report.message);
      return ctx.finish();
    }
    y = sol.field;
  }
  const ElasticaSolution lim = solve_elastica(cfg.modulus(), cfg.load, cfg.L, cfg.elastica_n, cfg.elastica_tol);
  RotationProfile rot;
  TensorField G;
  StressFields S;
  const DiagnosticRow row = ctx.timed("diagnose", [&] { return diagnose(y, cfg.load, cfg.energy, &lim, &rot, &G, &S); });

  {
    CsvWriter w(ctx.file("rotations.csv"), {"x1", "theta_h"});
    for (std::size_t i = 0; i < rot.node_x.size(); ++i) w.row({rot.node_x[i], rot.theta[i]});
  }
  {
    CsvWriter w(ctx.file("fields.csv"), {"element", "qp", "x1", "x2", "G11", "G12", "G21", "G22", "E11", "E12", "E21", "E22"});
    for (int e = 0; e < mesh.num_elements(); ++e)
      for (int q = 0; q < 4; ++q) {
        const Vec2 p = mesh.qp_position(e, q);
        const Mat2 &g = G.at(e, q), &s = S.E.at(e, q);
        w.row({static_cast<double>(e), static_cast<double>(q), p.x, p.y, g.a11, g.a12, g.a21, g.a22, s.a11, s.a12, s.a21, s.a22});
      }
  }
  {
    CsvWriter w(ctx.file("moments.csv"), {"x1", "barE11", "barE12", "barE21", "barE22", "hatE11", "hatE12", "hatE21", "hatE22", "hatG11"});
    for (std::size_t c = 0; c < S.E.column_x.size(); ++c) {
      const Mat2 &b = S.E.bar[c], &t = S.E.hat[c];
      w.row({S.E.column_x[c], b.a11, b.a12, b.a21, b.a22, t.a11, t.a12, t.a21, t.a22, G.hat[c].a11});
    }
  }
  {
    CsvWriter w(ctx.file("identities.csv"), {"h", "r1", "r2", "r3", "r4", "r5"});
    const auto &r = row.identities;
    w.row({r.h, r.r1, r.r2, r.r3, r.r4, r.r5});
  }
  KeyValueCsv kv;
  kv.add("theta_err_L2", row.theta_err_L2);
  kv.add("y_err_W12", row.y_err_W12);
  kv.add("energy_over_h2", row.energy_over_h2);
  kv.add("theta_sup", row.theta_sup);
  kv.add("interpolation_lhs", row.interpolation.lhs);
  kv.add("interpolation_rhs", row.interpolation.rhs);
  kv.add("G_L2", row.G_L2);
  kv.add("rotation_gap_L2", row.rotation_gap_L2);
  kv.add("stress_lin_gap", row.stress_lin_gap);
  kv.add("z_boundary", row.z_boundary);
  kv.write(ctx.file("diagnostics.csv"));
  return ctx.finish();
}

/// Elastica limit once, then the strip for every h (warm start from the
/// previous h), diagnostics per h, and the convergence tables.
inline RunManifest run_convergence(const ExperimentConfig &cfg, const std::string &out = "") {
  detail::RunContext ctx("converge", cfg, out);
  const ElasticaSolution lim = ctx.timed("elastica", [&] {
    return solve_elastica(cfg.modulus(), cfg.load, cfg.L, cfg.elastica_n, cfg.elastica_tol);
  });
  detail::write_elastica_csv(ctx.file("elastica.csv"), lim);

  CsvWriter conv(ctx.file("convergence.csv"), {"h", "theta_err_L2", "y_err_W12", "energy_over_h2"});
  CsvWriter ids(ctx.file("identities.csv"), {"h", "r1", "r2", "r3", "r4", "r5"});
  CsvWriter trends(ctx.file("trends.csv"), {"h", "nx", "ny", "iterations", "residual", "theta_sup", "interpolation_lhs",
                                            "interpolation_rhs", "G_L2", "rotation_gap_L2", "stress_lin_gap", "z_boundary"});
  std::optional<DeformationField> prev;
  for (double h : cfg.h_list) {
    const std::string tag = "h=" + fmt_short(h);
    const StripMesh mesh = cfg.mesh_for(h);
    if (mesh.nx < static_cast<int>(std::ceil(4.0 * cfg.L / h - 1e-9)))
      throw ConfigError("strip.nx too small for h = " + fmt_short(h) + " (need nx >= 4 L / h)");
    std::optional<DeformationField> warm;
    if (prev) warm = warm_start_from(*prev, mesh, h);
    const StripSolution sol = ctx.timed("solve " + tag, [&] {
      return solve_stationary(mesh, h, cfg.load, cfg.energy, cfg.solver, warm ? &*warm : nullptr);
    });
    if (!sol.report.converged) {
      ctx.manifest().fail(kExitNonConvergence, tag + ": " + sol.report.message);
      continue;
    }
    prev = sol.field;
    DiagnosticRow d;
    try {
      d = ctx.timed("diagnose " + tag, [&] { return diagnose(sol.field, cfg.load, cfg.energy, &lim); });
    } catch (const DiagnosticError &e) {
      ctx.manifest().fail(kExitDiagnostic, tag + ": " + e.what());
      continue;
    }
    conv.row({h, d.theta_err_L2, d.y_err_W12, d.energy_over_h2});
    const auto &r = d.identities;
    ids.row({h, r.r1, r.r2, r.r3, r.r4, r.r5});
    trends.row({h, static_cast<double>(mesh.nx), static_cast<double>(mesh.ny), static_cast<double>(sol.report.iterations),
                sol.report.residual, d.theta_sup, d.interpolation.lhs, d.interpolation.rhs, d.G_L2, d.rotation_gap_L2,
                d.stress_lin_gap, d.z_boundary});
  }
  return ctx.finish();
}

struct TruncationRow {
  int cells_x = 0, cells_y = 0;
  double a = 0.0, A = 0.0;
  int field = 0;
  std::uint64_t seed = 0;
  TruncationResult result;
  double grad_max = 0.0;
  bool lipschitz_ok = false;
  bool identity_ok = false;
};

/// Checks the two exact properties of a thin truncation result.
inline std::pair<bool, bool> verify_truncation(const GridFunction &u, const TruncationResult &r) {
  const bool lip = max_value(gradient_magnitude(r.v)) <= r.lambda;
  bool same = true;
  for (int n = 0; n < u.num_nodes() && same; ++n)
    if (!r.bad[n])
      for (int c = 0; c < u.m; ++c)
        if (r.v.values[static_cast<std::size_t>(n) * u.m + c] != u.values[static_cast<std::size_t>(n) * u.m + c]) same = false;
  return {lip, same};
}

/// Seeded sweep: fields x resolutions x ranges; `on_row` sees every result.
inline void truncation_sweep(const TruncationSettings &t, std::uint64_t seed,
                             const std::function<void(const TruncationRow &)> &on_row) {
  std::vector<std::pair<double, double>> ranges{{t.a, t.A}};
  if (t.widen) ranges.emplace_back(0.5 * t.a, 2.0 * t.A);
  for (std::size_t r = 0; r < t.cells_x.size(); ++r) {
    for (int f = 0; f < t.fields; ++f) {
      const std::uint64_t s = seed + static_cast<std::uint64_t>(f);
      const GridFunction u = rough_field(s, t.cells_x[r], t.cells_y[r], t.field);
      const ThinExtension te = prepare_thin(u, t.field.h);
      for (const auto &[a, A] : ranges) {
        TruncationRow row;
        row.cells_x = t.cells_x[r];
        row.cells_y = t.cells_y[r];
        row.a = a;
        row.A = A;
        row.field = f;
        row.seed = s;
        try {
          row.result = thin_truncate(te, a, A, t.p);
        } catch (const TruncationError &e) {
          throw TruncationError(std::string(e.what()) + " (field seed " + std::to_string(s) + ", grid " +
                                std::to_string(t.cells_x[r]) + "x" + std::to_string(t.cells_y[r]) + ", a=" + fmt_short(a) +
                                ", A=" + fmt_short(A) + ")");
        }
        row.grad_max = max_value(gradient_magnitude(row.result.v));
        std::tie(row.lipschitz_ok, row.identity_ok) = verify_truncation(u, row.result);
        on_row(row);
      }
    }
  }
}

inline RunManifest run_truncation_demo(const ExperimentConfig &cfg, const std::string &out = "") {
  detail::RunContext ctx("truncate", cfg, out);
  const TruncationSettings &t = cfg.truncation;

  if (!t.input.empty()) {
    std::ifstream in(t.input);
    if (!in) throw ConfigError("cannot open truncation.input '" + t.input + "'");
    const GridFunction u = read_grid_csv(in);
    const double h = u.dy * (u.ny - 1);
    const TruncationResult r = ctx.timed("truncate", [&] { return thin_truncate(u, h, t.a, t.A, t.p); });
    const auto [lip, same] = verify_truncation(u, r);
    {
      std::ofstream os(ctx.file("truncated.csv"));
      write_grid_csv(os, r.v);
    }
    KeyValueCsv kv;
    kv.add("lambda", r.lambda);
    kv.add("q", r.q);
    kv.add("bad_area", r.bad_area);
    kv.add("dirichlet", r.dirichlet);
    kv.add("strips", static_cast<double>(r.strips));
    kv.add("chosen_strip", static_cast<double>(r.chosen_strip));
    kv.add("total_bad", r.total_bad);
    kv.add("g_lambda", r.g_lambda);
    kv.add("integral_fp", r.integral_fp);
    kv.add("scale", r.scale);
    kv.add("grad_max", max_value(gradient_magnitude(r.v)));
    kv.add("lipschitz_ok", lip ? 1.0 : 0.0);
    kv.add("identity_ok", same ? 1.0 : 0.0);
    kv.write(ctx.file("truncation_result.csv"));
    if (!lip || !same) ctx.manifest().fail(kExitDiagnostic, "truncation of the input grid violates its guarantees");
    return ctx.finish();
  }

  struct Summary {
    int cx, cy;
    double a, A, max_q = 0.0, sum_q = 0.0;
    int count = 0, zero = 0, violations = 0;
  };
  std::vector<Summary> sums;
  CsvWriter rows(ctx.file("truncation.csv"),
                 {"cells_x", "cells_y", "a", "A", "field", "seed", "lambda", "q", "bad_area", "dirichlet", "scale",
                  "grad_max", "lipschitz_ok", "identity_ok", "chosen_strip", "strips", "total_bad", "g_lambda", "integral_fp"});
  ctx.timed("sweep", [&] {
    truncation_sweep(t, cfg.seed, [&](const TruncationRow &r) {
      const TruncationResult &x = r.result;
      rows.row({static_cast<double>(r.cells_x), static_cast<double>(r.cells_y), r.a, r.A, static_cast<double>(r.field),
                static_cast<double>(r.seed), x.lambda, x.q, x.bad_area, x.dirichlet, x.scale, r.grad_max,
                r.lipschitz_ok ? 1.0 : 0.0, r.identity_ok ? 1.0 : 0.0, static_cast<double>(x.chosen_strip),
                static_cast<double>(x.strips), x.total_bad, x.g_lambda, x.integral_fp});
      auto it = std::find_if(sums.begin(), sums.end(), [&](const Summary &s) {
        return s.cx == r.cells_x && s.cy == r.cells_y && s.a == r.a && s.A == r.A;
      });
      if (it == sums.end()) {
        sums.push_back({r.cells_x, r.cells_y, r.a, r.A});
        it = sums.end() - 1;
      }
      it->max_q = std::max(it->max_q, x.q);
      it->sum_q += x.q;
      ++it->count;
      it->zero += x.q == 0.0;
      it->violations += !r.lipschitz_ok + !r.identity_ok;
    });
  });
  CsvWriter sw(ctx.file("truncation_summary.csv"), {"cells_x", "cells_y", "a", "A", "fields", "max_q", "mean_q", "zero_q", "violations"});
  int violations = 0;
  for (const auto &s : sums) {
    sw.row({static_cast<double>(s.cx), static_cast<double>(s.cy), s.a, s.A, static_cast<double>(s.count), s.max_q,
            s.sum_q / s.count, static_cast<double>(s.zero), static_cast<double>(s.violations)});
    violations += s.violations;
  }
  if (violations > 0) ctx.manifest().fail(kExitDiagnostic, std::to_string(violations) + " truncation guarantee violations");
  return ctx.finish();
}

inline RunManifest run_energy_check(const ExperimentConfig &cfg, const std::string &out = "") {
  detail::RunContext ctx("energy-check", cfg, out);
  HypothesisCheckOptions opt;
  opt.samples = cfg.energy_samples;
  opt.seed = cfg.seed;
  // isotropic-quadratic vanishes on reflections, so the H3 lower bound fails by design
  if (cfg.energy.kind() == EnergyKind::isotropic_quadratic) opt.expected_failures.insert("H3");
  const auto results = ctx.timed("checks", [&] { return check_hypotheses(cfg.energy, opt); });
  CsvWriter w(ctx.file("energy_checks.csv"), {"name", "hypothesis", "status", "value", "threshold"});
  std::set<std::string> violated;
  for (const auto &r : results) {
    w.row_text({r.name, r.hypothesis, to_string(r.status), fmt(r.value), fmt(r.threshold)});
    if (r.status == CheckStatus::fail) violated.insert(r.hypothesis);
  }
  KeyValueCsv kv;
  kv.add("energy", cfg.energy.name());
  kv.add("E", linearize(cfg.energy).modulus);
  kv.write(ctx.file("report.csv"));
  if (!violated.empty()) {
    std::string tags;
    for (const auto &v : violated) tags += (tags.empty() ? "" : ",") + v;
    ctx.manifest().fail(kExitDiagnostic, "violated hypotheses: " + tags);
  }
  return ctx.finish();
}

}  // namespace thinbeam
