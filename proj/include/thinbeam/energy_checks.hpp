#pragma once

// Sampling checks of the structural hypotheses on a stored-energy density:
//   H1 frame indifference, H2 W = 0 on SO(2), H3 W >= c dist^2(F, SO(2)),
//   H4 smoothness near SO(2) (derivatives against finite differences,
//      properties of the linearization L = D^2 W(Id)).

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "thinbeam/energy.hpp"

namespace thinbeam {

enum class CheckStatus { pass, fail, expected_failure };

inline const char *to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::pass: return "pass";
    case CheckStatus::fail: return "fail";
    case CheckStatus::expected_failure: return "xfail";
  }
  return "?";
}

struct CheckResult {
  std::string name;
  std::string hypothesis;  // "H1" ... "H4", or "-" for reported values
  CheckStatus status = CheckStatus::pass;
  double value = 0.0;      // the measured quantity
  double threshold = 0.0;  // what it was compared against
};

struct HypothesisCheckOptions {
  int samples = 1000;
  unsigned long long seed = 1;
  std::set<std::string> expected_failures;  // hypothesis tags allowed to fail
};

namespace detail {

inline Mat2 random_matrix(std::mt19937_64 &rng, double spread) {
  std::uniform_real_distribution<double> u(-spread, spread);
  return {u(rng), u(rng), u(rng), u(rng)};
}

inline double random_angle(std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
  return u(rng);
}

inline CheckStatus judge(bool ok, const std::string &tag, const HypothesisCheckOptions &opt) {
  if (ok) return CheckStatus::pass;
  return opt.expected_failures.count(tag) ? CheckStatus::expected_failure : CheckStatus::fail;
}

}  // namespace detail

template <StoredEnergy W>
std::vector<CheckResult> check_hypotheses(const W &w, const HypothesisCheckOptions &opt = {}) {
  std::mt19937_64 rng(opt.seed);
  std::vector<CheckResult> out;
  const int n = opt.samples;

  // H1
  {
    double worst = 0.0;
    for (int k = 0; k < n; ++k) {
      const Mat2 f = Mat2::identity() + detail::random_matrix(rng, 0.6);
      const Mat2 r = rotation_matrix(detail::random_angle(rng));
      const double w0 = w.energy(f);
      worst = std::max(worst, std::abs(w.energy(r * f) - w0) / std::max(1.0, std::abs(w0)));
    }
    out.push_back({"frame_indifference", "H1", detail::judge(worst <= 1e-12, "H1", opt), worst, 1e-12});
  }

  // H2
  {
    double worst = 0.0;
    for (int k = 0; k < n; ++k) worst = std::max(worst, std::abs(w.energy(rotation_matrix(detail::random_angle(rng)))));
    out.push_back({"zero_on_rotations", "H2", detail::judge(worst <= 1e-12, "H2", opt), worst, 1e-12});
  }

  // H3: smallest ratio W/dist^2 over random matrices of both determinant
  // signs plus reflection probes R diag(1,-1).
  {
    double cmin = std::numeric_limits<double>::infinity();
    auto probe = [&](const Mat2 &f) {
      const double d = dist_so2(f);
      if (d > 1e-3) cmin = std::min(cmin, w.energy(f) / (d * d));
    };
    for (int k = 0; k < n; ++k) probe(detail::random_matrix(rng, 2.0));
    for (int k = 0; k < 16; ++k) probe(rotation_matrix(k * std::numbers::pi / 8.0) * Mat2::diag(1.0, -1.0));
    out.push_back({"coercivity_constant", "H3", detail::judge(cmin > 1e-8, "H3", opt), cmin, 1e-8});
  }

  // H4: DW against central differences of W, det F > 1/4.
  {
    double worst = 0.0;
    constexpr double step = 1e-5;
    int taken = 0;
    while (taken < n) {
      const Mat2 f = rotation_matrix(detail::random_angle(rng)) * (Mat2::identity() + detail::random_matrix(rng, 0.5));
      if (det(f) <= 0.25) continue;
      ++taken;
      const auto base = f.flat();
      const auto dw = w.stress(f).flat();
      for (int j = 0; j < 4; ++j) {
        auto p = base, m = base;
        p[j] += step;
        m[j] -= step;
        const double fd = (w.energy(Mat2::from_flat(p)) - w.energy(Mat2::from_flat(m))) / (2.0 * step);
        worst = std::max(worst, std::abs(fd - dw[j]) / std::max(1.0, std::abs(dw[j])));
      }
    }
    out.push_back({"stress_matches_fd", "H4", detail::judge(worst <= 1e-6, "H4", opt), worst, 1e-6});
  }

  // H4: D^2W against central differences of DW near SO(2).
  {
    double worst = 0.0;
    constexpr double step = 1e-6;
    for (int k = 0; k < n; ++k) {
      const Mat2 f = rotation_matrix(detail::random_angle(rng)) * (Mat2::identity() + detail::random_matrix(rng, 0.15));
      const Tangent4 t = tangent_of(w, f);
      const auto base = f.flat();
      for (int j = 0; j < 4; ++j) {
        auto p = base, m = base;
        p[j] += step;
        m[j] -= step;
        const auto sp = w.stress(Mat2::from_flat(p)).flat();
        const auto sm = w.stress(Mat2::from_flat(m)).flat();
        for (int i = 0; i < 4; ++i)
          worst = std::max(worst, std::abs((sp[i] - sm[i]) / (2.0 * step) - t(i, j)) / std::max(1.0, std::abs(t(i, j))));
      }
    }
    out.push_back({"tangent_matches_fd", "H4", detail::judge(worst <= 1e-6, "H4", opt), worst, 1e-6});
  }

  const Linearization lin = linearize(w);

  // H4: L symmetric, L F = L sym F, L F symmetric.
  {
    double asym = 0.0, objective = 0.0;
    for (int k = 0; k < n; ++k) {
      const Mat2 a = detail::random_matrix(rng, 1.0), b = detail::random_matrix(rng, 1.0);
      asym = std::max(asym, std::abs(ddot(lin.apply(a), b) - ddot(a, lin.apply(b))));
      const Mat2 la = lin.apply(a);
      objective = std::max(objective, norm(la - lin.apply(sym(a))) + std::abs(la.a12 - la.a21));
    }
    out.push_back({"linearization_symmetric", "H4", detail::judge(asym <= 1e-9, "H4", opt), asym, 1e-9});
    out.push_back({"linearization_objective", "H4", detail::judge(objective <= 1e-9, "H4", opt), objective, 1e-9});
  }

  // H4: L A : A >= c |sym A|^2, c measured by sampling.
  {
    double cmin = std::numeric_limits<double>::infinity();
    for (int k = 0; k < n; ++k) {
      const Mat2 a = detail::random_matrix(rng, 1.0);
      const double s = norm_sq(sym(a));
      if (s > 1e-8) cmin = std::min(cmin, ddot(lin.apply(a), a) / s);
    }
    out.push_back({"linearization_positive", "H4", detail::judge(cmin > 1e-8, "H4", opt), cmin, 1e-8});
  }

  out.push_back({"modulus_E", "-", CheckStatus::pass, lin.modulus, 0.0});
  return out;
}

inline bool all_passed(const std::vector<CheckResult> &results) {
  return std::none_of(results.begin(), results.end(),
                      [](const CheckResult &r) { return r.status == CheckStatus::fail; });
}

}  // namespace thinbeam
