// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "thinbeam/lab.hpp"

using namespace thinbeam;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Collects the individual checks of one criterion and prints their details.
struct Verdict {
  bool ok = true;
  std::vector<std::string> notes;

  void check(bool cond, const char *format, ...) __attribute__((format(printf, 3, 4))) {
    char buf[512];
    va_list ap;
    va_start(ap, format);
    std::vsnprintf(buf, sizeof buf, format, ap);
    va_end(ap);
    notes.push_back(std::string(cond ? "    ok   " : "    FAIL ") + buf);
    ok = ok && cond;
  }
  void note(const std::string &s) { notes.push_back("         " + s); }
};

int failures = 0;

void criterion(int id, const char *title, const std::function<void(Verdict &)> &body) {
  Verdict v;
  const auto t0 = Clock::now();
  try {
    body(v);
  } catch (const std::exception &e) {
    v.check(false, "exception: %s", e.what());
  }
  const double t = since(t0);
  std::printf("%s criterion %d: %s (%.2f s)\n", v.ok ? "PASS" : "FAIL", id, title, t);
  for (const auto &n : v.notes) std::printf("%s\n", n.c_str());
  std::fflush(stdout);
  if (!v.ok) ++failures;
}

bool strictly_decreasing(const std::vector<double> &v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] < v[i - 1])) return false;
  return true;
}

double spread(const std::vector<double> &v) {
  double lo = v.front(), hi = v.front();
  for (double x : v) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  return hi / lo;
}

std::string list(const std::vector<double> &v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : ", ") + fmt_short(x);
  return s;
}

// Piecewise linear interpolation of the first column of barE in x1.
Vec2 bar_e1_at(const TensorField &E, double x) {
  const auto &cx = E.column_x;
  std::size_t k = 1;
  while (k + 1 < cx.size() && cx[k] < x) ++k;
  const double t = std::clamp((x - cx[k - 1]) / (cx[k] - cx[k - 1]), 0.0, 1.0);
  return E.bar[k - 1].col(0) * (1.0 - t) + E.bar[k].col(0) * t;
}

const std::vector<double> kH{0.2, 0.1, 0.05, 0.025};

// Cantilever sweep at the mesh-rule defaults, warm-started in h.
struct Cantilever {
  ExperimentConfig cfg;
  ElasticaSolution limit;
  std::vector<DiagnosticRow> rows;
  double seconds = 0.0;
  bool converged = true;
};

const Cantilever &cantilever() {
  static const Cantilever c = [] {
    Cantilever c;
    const auto t0 = Clock::now();
    c.cfg = parse_experiment(Config::parse_string("load.g2 = -1e-3\n"));
    c.limit = solve_elastica(1.0, c.cfg.load, 1.0, c.cfg.elastica_n);
    std::optional<DeformationField> prev;
    for (double h : kH) {
      const StripMesh mesh = c.cfg.mesh_for(h);
      std::optional<DeformationField> warm;
      if (prev) warm = warm_start_from(*prev, mesh, h);
      const StripSolution s = solve_stationary(mesh, h, c.cfg.load, c.cfg.energy, c.cfg.solver, warm ? &*warm : nullptr);
      c.converged = c.converged && s.report.converged;
      prev = s.field;
      c.rows.push_back(diagnose(s.field, c.cfg.load, c.cfg.energy, &c.limit));
    }
    c.seconds = since(t0);
    return c;
  }();
  return c;
}

std::vector<double> column(const std::vector<DiagnosticRow> &rows, const std::function<double(const DiagnosticRow &)> &f) {
  std::vector<double> out;
  for (const auto &r : rows) out.push_back(f(r));
  return out;
}

}  // namespace

int main() {
  std::printf("acceptance: h sweep %s, mesh rule nx = max(64, ceil(16 L / h)), ny = 8\n\n", list(kH).c_str());

  criterion(1, "trivial equilibrium under zero load", [](Verdict &v) {
    const ExperimentConfig cfg = parse_experiment(Config::parse_string("load.g2 = 0\n"));
    const ElasticaSolution lim = solve_elastica(1.0, cfg.load, 1.0, 256);
    for (double h : kH) {
      const auto t0 = Clock::now();
      const StripMesh mesh = cfg.mesh_for(h);
      const StripSolution s = solve_stationary(mesh, h, cfg.load, cfg.energy, cfg.solver);
      const DiagnosticRow d = diagnose(s.field, cfg.load, cfg.energy, &lim);
      const double t = since(t0);
      const auto &r = d.identities;
      v.check(s.report.converged && s.report.residual <= 1e-12 && s.report.iterations <= 2,
              "h=%g (%dx%d): residual %.3g, %d iterations", h, mesh.nx, mesh.ny, s.report.residual, s.report.iterations);
      v.check(r.r1 == 0.0 && r.r2 == 0.0 && r.r3 == 0.0 && r.r4 == 0.0, "h=%g: r1..r4 = %g %g %g %g", h, r.r1, r.r2,
              r.r3, r.r4);
      v.check(t <= 1.0, "h=%g: %.3f s <= 1 s", h, t);
    }
  });

  criterion(2, "energy scaling of the cantilever", [](Verdict &v) {
    const Cantilever &c = cantilever();
    v.check(c.converged, "all four strip solves converged");
    const auto e = column(c.rows, [](const DiagnosticRow &r) { return r.energy_over_h2; });
    v.check(spread(e) <= 2.0, "energy/h^2 = %s, max/min %.4f <= 2", list(e).c_str(), spread(e));
    v.check(c.seconds <= 300.0, "sweep with diagnostics %.2f s <= 300 s", c.seconds);
  });

  criterion(3, "convergence to the elastica", [](Verdict &v) {
    const Cantilever &c = cantilever();
    const auto th = column(c.rows, [](const DiagnosticRow &r) { return r.theta_err_L2; });
    const auto y = column(c.rows, [](const DiagnosticRow &r) { return r.y_err_W12; });
    v.check(strictly_decreasing(th), "theta error %s strictly decreasing", list(th).c_str());
    v.check(th.back() <= 0.5 * th.front(), "theta error ratio h=0.025/h=0.2: %.4f <= 0.5", th.back() / th.front());
    v.check(strictly_decreasing(y), "midline W12 error %s strictly decreasing", list(y).c_str());
    v.check(y.back() <= 0.5 * y.front(), "midline error ratio h=0.025/h=0.2: %.4f <= 0.5", y.back() / y.front());
  });

  criterion(4, "residuals of the limit identities", [](Verdict &v) {
    const Cantilever &c = cantilever();
    const auto r1 = column(c.rows, [](const DiagnosticRow &r) { return r.identities.r1; });
    const auto r2 = column(c.rows, [](const DiagnosticRow &r) { return r.identities.r2; });
    const auto r3 = column(c.rows, [](const DiagnosticRow &r) { return r.identities.r3; });
    const auto r4 = column(c.rows, [](const DiagnosticRow &r) { return r.identities.r4; });
    v.check(strictly_decreasing(r1), "r1 = %s decreasing with h", list(r1).c_str());
    v.check(strictly_decreasing(r3), "r3 = %s decreasing with h", list(r3).c_str());
    v.check(spread(r4) <= 2.0, "r4 = %s, max/min %.4f <= 2", list(r4).c_str(), spread(r4));
    v.note("r2 over the sweep = " + list(r2));

    // r2 at h = 0.1 on the rule mesh and two doublings; the mesh error of
    // barE e1 is its L2 change from the next finer mesh
    const double h = 0.1;
    const StripMesh base = c.cfg.mesh_for(h);
    std::vector<double> res;
    std::vector<TensorField> bars;
    for (int k = 0; k < 3; ++k) {
      const StripMesh m = build_mesh(1.0, base.nx << k, base.ny << k);
      const StripSolution s = solve_stationary(m, h, c.cfg.load, c.cfg.energy, c.cfg.solver);
      StressFields S;
      const DiagnosticRow d = diagnose(s.field, c.cfg.load, c.cfg.energy, &c.limit, nullptr, nullptr, &S);
      res.push_back(d.identities.r2);
      bars.push_back(S.E);
    }
    for (int k = 0; k < 2; ++k) {
      const TensorField &E = bars[k];
      double err = 0.0;
      const double w = 0.5 * E.mesh.dx();
      for (std::size_t col = 0; col < E.column_x.size(); ++col) {
        const Vec2 d = E.bar[col].col(0) - bar_e1_at(bars[k + 1], E.column_x[col]);
        err += w * dot(d, d);
      }
      err = std::sqrt(err);
      v.check(res[k] <= 10.0 * err, "%dx%d: r2 %.4g <= 10 x mesh error %.4g", base.nx << k, base.ny << k, res[k], err);
      const double ratio = res[k] / res[k + 1];
      v.check(std::abs(ratio - 2.0) <= 0.2, "r2 %dx%d / %dx%d = %.4f (halving)", base.nx << k, base.ny << k,
              base.nx << (k + 1), base.ny << (k + 1), ratio);
    }
  });

  criterion(5, "rigidity ratio", [](Verdict &v) {
    const auto r5 = column(cantilever().rows, [](const DiagnosticRow &r) { return r.identities.r5; });
    v.check(spread(r5) <= 2.0, "r5 = %s, max/min %.4f <= 2", list(r5).c_str(), spread(r5));
  });

  criterion(6, "elastica oracle", [](Verdict &v) {
    const auto t0 = Clock::now();
    const double gamma = 1e-3;
    const LoadProfile g = LoadProfile::constant({0.0, -gamma});
    const ElasticaSolution s = solve_elastica(1.0, g, 1.0, 256);
    const double tip = -2.0 * gamma;
    v.check(s.converged && std::abs(s.theta.back() - tip) <= 0.005 * std::abs(tip), "tip angle %.8g vs %.8g (%.3g%%)",
            s.theta.back(), tip, 100.0 * std::abs(s.theta.back() / tip - 1.0));
    const ElasticaSolution m = minimize_J2(1.0, g, 1.0, 256);
    double sup = 0.0;
    for (std::size_t k = 0; k < s.theta.size(); ++k) sup = std::max(sup, std::abs(s.theta[k] - m.theta[k]));
    v.check(m.converged && sup <= 1e-6, "shooting vs direct minimization sup %.3g <= 1e-6", sup);

    const DiscreteJ2 j(1.0, g, 1.0, 256);
    std::vector<double> th = s.theta;
    for (std::size_t k = 1; k < th.size(); ++k) th[k] += 0.05 * std::sin(7.0 * k / th.size());
    const std::vector<double> grad = j.gradient(th);
    double worst = 0.0;
    for (std::size_t k = 1; k < th.size(); k += 5) {
      const double t = 1e-6;
      std::vector<double> p = th, q = th;
      p[k] += t;
      q[k] -= t;
      const double fd = (j.value(p) - j.value(q)) / (2 * t);
      worst = std::max(worst, std::abs(grad[k] - fd) / std::max(std::abs(fd), 1e-12));
    }
    v.check(worst <= 1e-6, "discrete J2 gradient vs central differences, max relative %.3g <= 1e-6", worst);
    const double t = since(t0);
    v.check(t <= 1.0, "%.3f s <= 1 s", t);
  });

  criterion(7, "effective modulus", [](Verdict &v) {
    // independent: invert the symmetric block of the closed-form map with Eigen
    auto eigen_modulus = [](double mu, double lambda) {
      Eigen::Matrix3d m;
      m << 2 * mu + lambda, lambda, 0, lambda, 2 * mu + lambda, 0, 0, 0, 2 * mu;
      return 1.0 / m.fullPivLu().solve(Eigen::Vector3d(1, 0, 0))(0);
    };
    // half-dist-squared linearizes to the symmetric part: mu = 1/2, lambda = 0
    const double e0 = linearize(EnergyDensity::half_dist_squared()).modulus;
    v.check(std::abs(e0 - 1.0) <= 1e-12 && std::abs(e0 - eigen_modulus(0.5, 0.0)) <= 1e-12,
            "half-dist-squared E = %.17g", e0);
    for (auto [mu, lambda] : {std::pair{1.0, 1.0}, {0.5, 0.0}, {2.0, 3.5}, {0.3, 7.0}}) {
      const Linearization lin = linearize(EnergyDensity::isotropic_quadratic(mu, lambda));
      const double formula = 4.0 * mu * (mu + lambda) / (lambda + 2.0 * mu), ref = eigen_modulus(mu, lambda);
      // also invert the implementation's own matrix of the map
      Eigen::Matrix3d own;
      for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) own(i, k) = lin.basis[i][k];
      const double own_e = 1.0 / own.fullPivLu().solve(Eigen::Vector3d(1, 0, 0))(0);
      const double err = std::max({std::abs(lin.modulus - formula), std::abs(lin.modulus - ref), std::abs(own_e - ref)}) / ref;
      v.check(err <= 1e-12, "mu=%g lambda=%g: E = %.15g, formula %.15g, relative gap %.2g", mu, lambda, lin.modulus, formula, err);
    }
  });

  criterion(8, "thin-domain truncation sweep", [](Verdict &v) {
    const auto t0 = Clock::now();
    const TruncationSettings t;  // 50 fields, 64x8 / 128x16 / 256x32, (5, 15) and (2.5, 30)
    struct Group {
      int cx, cy;
      double a, A, max_q = 0.0;
      int zero = 0;
    };
    std::vector<Group> groups;
    int rows = 0, lip_bad = 0, id_bad = 0;
    truncation_sweep(t, 1000, [&](const TruncationRow &r) {
      ++rows;
      lip_bad += !r.lipschitz_ok;
      id_bad += !r.identity_ok;
      auto it = std::find_if(groups.begin(), groups.end(),
                             [&](const Group &g) { return g.cx == r.cells_x && g.a == r.a; });
      if (it == groups.end()) {
        groups.push_back({r.cells_x, r.cells_y, r.a, r.A});
        it = groups.end() - 1;
      }
      it->max_q = std::max(it->max_q, r.result.q);
      it->zero += r.result.q == 0.0;
    });
    v.check(rows == 300, "%d truncations (50 fields x 3 grids x 2 ranges)", rows);
    v.check(lip_bad == 0, "discrete |grad v| <= lambda in every case (%d violations)", lip_bad);
    v.check(id_bad == 0, "v = u off the bad set in every case (%d violations)", id_bad);
    std::vector<double> maxq;
    for (const auto &g : groups) {
      maxq.push_back(g.max_q);
      char buf[160];
      std::snprintf(buf, sizeof buf, "%dx%d (a, A) = (%g, %g): max q %.4f, q = 0 for %d fields", g.cx, g.cy, g.a, g.A,
                    g.max_q, g.zero);
      v.note(buf);
    }
    const bool positive = std::all_of(maxq.begin(), maxq.end(), [](double q) { return q > 0.0; });
    v.check(positive && spread(maxq) <= 2.0, "max q across grids and ranges: max/min %.4f <= 2", positive ? spread(maxq) : 0.0);
    const double s = since(t0);
    v.check(s <= 120.0, "%.2f s <= 120 s", s);
  });

  criterion(9, "energy-density hypotheses", [](Verdict &v) {
    HypothesisCheckOptions half;
    half.samples = 1000;
    for (const auto &r : check_hypotheses(EnergyDensity::half_dist_squared(), half))
      v.check(r.status == CheckStatus::pass, "half-dist-squared %s [%s]: %s (%.3g vs %.3g)", r.name.c_str(),
              r.hypothesis.c_str(), to_string(r.status), r.value, r.threshold);
    HypothesisCheckOptions iso = half;
    iso.expected_failures.insert("H3");
    int xfail = 0;
    for (const auto &r : check_hypotheses(EnergyDensity::isotropic_quadratic(1.0, 1.0), iso)) {
      const bool fine = r.status == CheckStatus::pass || (r.status == CheckStatus::expected_failure && r.hypothesis == "H3");
      xfail += r.status == CheckStatus::expected_failure;
      v.check(fine, "isotropic-quadratic(1,1) %s [%s]: %s (%.3g vs %.3g)%s", r.name.c_str(), r.hypothesis.c_str(),
              to_string(r.status), r.value, r.threshold,
              r.status == CheckStatus::expected_failure ? "  expected failure: vanishes on reflections" : "");
    }
    v.check(xfail >= 1, "H3 recorded as expected failure for isotropic-quadratic (%d)", xfail);
  });

  std::printf("\n%s: %d of 9 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
