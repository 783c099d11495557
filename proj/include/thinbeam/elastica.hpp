#pragma once

// Limit rod model: angle formulation of the clamped elastica
//
//   -(E/12) theta'' + gt . (-sin theta, cos theta) = 0 on (0, L),
//   theta(0) = 0,  theta'(L) = 0,  gt(x1) = \int_L^{x1} g,
//
// the bending functional J2 = \int (E/24) kappa^2 - g . ybar and the midline
// ybar' = (cos theta, sin theta), ybar(0) = 0.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "thinbeam/errors.hpp"
#include "thinbeam/load.hpp"
#include "thinbeam/mat2.hpp"

namespace thinbeam {

struct TiltedLoad {
  double L = 1.0;
  std::vector<double> x;
  std::vector<Vec2> value;
};

/// Primitive of g vanishing at L, composite trapezoid on n uniform intervals.
inline TiltedLoad gtilde(const LoadProfile &g, double L, int n) {
  if (n < 8) throw ConfigError("gtilde needs n >= 8");
  if (!(L > 0.0)) throw ConfigError("gtilde needs L > 0");
  TiltedLoad t{L, std::vector<double>(n + 1), std::vector<Vec2>(n + 1)};
  const double dx = L / n;
  for (int k = 0; k <= n; ++k) t.x[k] = k * dx;
  t.value[n] = Vec2{};
  for (int k = n - 1; k >= 0; --k) t.value[k] = t.value[k + 1] - 0.5 * dx * (g.at(t.x[k]) + g.at(t.x[k + 1]));
  return t;
}

struct ElasticaSolution {
  double L = 1.0;
  double E = 1.0;
  std::vector<double> x;
  std::vector<double> theta;
  std::vector<double> kappa;
  std::vector<Vec2> ybar;
  double J2 = 0.0;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;

  int n() const { return static_cast<int>(x.size()) - 1; }

  /// Piecewise-linear interpolation of theta.
  double theta_at(double x1) const {
    const double dx = L / n();
    const double s = std::clamp(x1 / dx, 0.0, static_cast<double>(n()));
    const int k = std::min(static_cast<int>(s), n() - 1);
    const double t = s - k;
    return (1.0 - t) * theta[k] + t * theta[k + 1];
  }

  Vec2 ybar_at(double x1) const {
    const double dx = L / n();
    const double s = std::clamp(x1 / dx, 0.0, static_cast<double>(n()));
    const int k = std::min(static_cast<int>(s), n() - 1);
    const double t = s - k;
    return (1.0 - t) * ybar[k] + t * ybar[k + 1];
  }
};

namespace detail {

/// Thomas algorithm for a general tridiagonal system (sub, diag, super).
inline std::vector<double> solve_tridiagonal(std::vector<double> sub, std::vector<double> diag,
                                             std::vector<double> sup, std::vector<double> rhs) {
  const std::size_t m = diag.size();
  for (std::size_t i = 1; i < m; ++i) {
    if (diag[i - 1] == 0.0) throw SolverError("singular tridiagonal system", 0.0);
    const double f = sub[i] / diag[i - 1];
    diag[i] -= f * sup[i - 1];
    rhs[i] -= f * rhs[i - 1];
  }
  if (diag[m - 1] == 0.0) throw SolverError("singular tridiagonal system", 0.0);
  std::vector<double> out(m);
  out[m - 1] = rhs[m - 1] / diag[m - 1];
  for (std::size_t i = m - 1; i-- > 0;) out[i] = (rhs[i] - sup[i] * out[i + 1]) / diag[i];
  return out;
}

inline std::vector<double> slopes(const std::vector<double> &theta, double dx) {
  const int n = static_cast<int>(theta.size()) - 1;
  std::vector<double> k(n + 1);
  k[0] = (-3.0 * theta[0] + 4.0 * theta[1] - theta[2]) / (2.0 * dx);
  for (int i = 1; i < n; ++i) k[i] = (theta[i + 1] - theta[i - 1]) / (2.0 * dx);
  k[n] = 0.0;  // ghost node theta_{n+1} = theta_{n-1}
  return k;
}

/// Finite-difference residual at nodes 1..n (index 0 unused, kept 0).
inline std::vector<double> elastica_residual(const std::vector<double> &th, const TiltedLoad &gt, double E,
                                             double factor) {
  const int n = static_cast<int>(th.size()) - 1;
  const double dx = gt.L / n;
  const double c = E / (12.0 * dx * dx);
  std::vector<double> r(n + 1, 0.0);
  for (int k = 1; k <= n; ++k) {
    const double next = k < n ? th[k + 1] : th[n - 1];
    const Vec2 &q = gt.value[k];
    r[k] = -c * (next - 2.0 * th[k] + th[k - 1]) + factor * (-q.x * std::sin(th[k]) + q.y * std::cos(th[k]));
  }
  return r;
}

inline double sup_abs(const std::vector<double> &v) {
  double m = 0.0;
  for (double a : v) m = std::max(m, std::abs(a));
  return m;
}

}  // namespace detail

/// ybar(x1) = \int_0^{x1} (cos theta, sin theta), trapezoid; also fills kappa.
inline ElasticaSolution reconstruct_midline(ElasticaSolution sol) {
  const int n = sol.n();
  const double dx = sol.L / n;
  sol.ybar.assign(n + 1, Vec2{});
  for (int k = 1; k <= n; ++k)
    sol.ybar[k] = sol.ybar[k - 1] + 0.5 * dx *
                                        Vec2{std::cos(sol.theta[k - 1]) + std::cos(sol.theta[k]),
                                             std::sin(sol.theta[k - 1]) + std::sin(sol.theta[k])};
  sol.kappa = detail::slopes(sol.theta, dx);
  return sol;
}

/// Trapezoid quadrature of (E/24) kappa^2 - g . ybar.
inline double J2_eval(const ElasticaSolution &sol, const LoadProfile &g, double E) {
  const int n = sol.n();
  const double dx = sol.L / n;
  const std::vector<double> kappa = sol.kappa.size() == sol.x.size() ? sol.kappa : detail::slopes(sol.theta, dx);
  double s = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double w = (k == 0 || k == n) ? 0.5 * dx : dx;
    s += w * (E / 24.0 * kappa[k] * kappa[k] - dot(g.at(sol.x[k]), sol.ybar[k]));
  }
  return s;
}

inline ElasticaSolution make_elastica(double E, double L, std::vector<double> theta) {
  ElasticaSolution sol;
  sol.L = L;
  sol.E = E;
  const int n = static_cast<int>(theta.size()) - 1;
  sol.x.resize(n + 1);
  for (int k = 0; k <= n; ++k) sol.x[k] = L * k / n;
  sol.theta = std::move(theta);
  return reconstruct_midline(std::move(sol));
}

/// Damped Newton on the central-difference system with a ghost node at L.
/// Strongly loaded cases (12 max|gt| L^2 / E > 5) ramp the load factor.
/// Returns the branch continued from theta = 0.
inline ElasticaSolution solve_elastica(double E, const LoadProfile &g, double L, int n, double tol = 1e-12) {
  if (!(E > 0.0)) throw ConfigError("elastica needs E > 0");
  if (n < 32) throw ConfigError("elastica.n must be >= 32");
  if (!(tol > 0.0)) throw ConfigError("elastica.tol must be positive");
  const TiltedLoad gt = gtilde(g, L, n);
  const double dx = L / n;
  const double c = E / (12.0 * dx * dx);

  double gmax = 0.0;
  for (const Vec2 &v : gt.value) gmax = std::max(gmax, norm(v));
  const double stiffness = 12.0 * gmax * L * L / E;
  const int ramp = stiffness > 5.0 ? static_cast<int>(std::ceil(stiffness / 5.0)) * 4 : 1;

  std::vector<double> th(n + 1, 0.0);
  int iterations = 0;
  double res = 0.0;
  for (int step = 1; step <= ramp; ++step) {
    const double factor = static_cast<double>(step) / ramp;
    auto r = detail::elastica_residual(th, gt, E, factor);
    res = detail::sup_abs(r);
    int it = 0;
    while (res > tol) {
      if (++it > 100) throw SolverError("elastica Newton stagnated", res);
      ++iterations;
      std::vector<double> sub(n, 0.0), diag(n, 0.0), sup(n, 0.0), rhs(n, 0.0);
      for (int k = 1; k <= n; ++k) {
        const Vec2 &q = gt.value[k];
        const int i = k - 1;
        diag[i] = 2.0 * c + factor * (-q.x * std::cos(th[k]) - q.y * std::sin(th[k]));
        if (k > 1) sub[i] = k < n ? -c : -2.0 * c;
        if (k < n) sup[i] = -c;
        rhs[i] = -r[k];
      }
      const auto d = detail::solve_tridiagonal(sub, diag, sup, rhs);
      double alpha = 1.0;
      bool accepted = false;
      for (int ls = 0; ls < 30; ++ls, alpha *= 0.5) {
        std::vector<double> trial = th;
        for (int k = 1; k <= n; ++k) trial[k] += alpha * d[k - 1];
        auto rt = detail::elastica_residual(trial, gt, E, factor);
        const double rn = detail::sup_abs(rt);
        if (rn < (1.0 - 1e-4 * alpha) * res || rn <= tol) {
          th = std::move(trial);
          r = std::move(rt);
          res = rn;
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        // residual is at its rounding floor (~ c eps |theta|) when the Newton
        // step itself is at machine precision relative to theta
        if (detail::sup_abs(d) <= 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, detail::sup_abs(th)))
          break;
        throw SolverError("elastica line search failed", res);
      }
    }
  }
  ElasticaSolution sol = make_elastica(E, L, std::move(th));
  sol.converged = true;
  sol.iterations = iterations;
  sol.residual = res;
  sol.J2 = J2_eval(sol, g, E);
  return sol;
}

/// Discrete J2 used by the direct minimizer: forward-difference bending term
/// and trapezoid load term on the trapezoid midline.
struct DiscreteJ2 {
  double E;
  double L;
  std::vector<Vec2> g;  // load at the nodes

  DiscreteJ2(double modulus, const LoadProfile &load, double length, int n) : E(modulus), L(length), g(n + 1) {
    for (int k = 0; k <= n; ++k) g[k] = load.at(length * k / n);
  }

  int n() const { return static_cast<int>(g.size()) - 1; }
  double dx() const { return L / n(); }
  double weight(int k) const { return (k == 0 || k == n()) ? 0.5 * dx() : dx(); }

  double value(const std::vector<double> &th) const {
    const double h = dx();
    double bend = 0.0;
    for (int k = 0; k < n(); ++k) {
      const double s = (th[k + 1] - th[k]) / h;
      bend += h * E / 24.0 * s * s;
    }
    Vec2 y;
    double load = 0.0;
    for (int k = 1; k <= n(); ++k) {
      y += 0.5 * h * Vec2{std::cos(th[k - 1]) + std::cos(th[k]), std::sin(th[k - 1]) + std::sin(th[k])};
      load += weight(k) * dot(g[k], y);
    }
    return bend - load;
  }

  /// dJ/dtheta_k for k = 0..n (entry 0 is the clamped value and is zeroed).
  std::vector<double> gradient(const std::vector<double> &th) const {
    const int m = n();
    const double h = dx();
    std::vector<double> grad(m + 1, 0.0);
    for (int k = 0; k < m; ++k) {
      const double f = E / 12.0 * (th[k + 1] - th[k]) / h;
      grad[k + 1] += f;
      grad[k] -= f;
    }
    // ybar_k depends on theta_j with weight h/2 (j = 0 or j = k) or h (0 < j < k);
    // accumulate the load sensitivities from the tip backwards.
    Vec2 tail;  // sum_{k > j} w_k g_k
    for (int j = m; j >= 1; --j) {
      const Vec2 own = weight(j) * g[j];
      const Vec2 s = h * tail + 0.5 * h * own;
      const Vec2 dt{-std::sin(th[j]), std::cos(th[j])};
      grad[j] -= dot(s, dt);
      tail += own;
    }
    grad[0] = 0.0;
    return grad;
  }
};

/// Direct minimization of the discrete J2 with theta(0) = 0: gradient descent
/// preconditioned by the discrete bending operator, Armijo backtracking.
/// Stops when max_k |dJ/dtheta_k| / w_k <= tol.
inline ElasticaSolution minimize_J2(double E, const LoadProfile &g, double L, int n, double tol = 1e-8,
                                    int max_iters = 20000) {
  if (!(E > 0.0)) throw ConfigError("elastica needs E > 0");
  if (n < 32) throw ConfigError("elastica.n must be >= 32");
  const DiscreteJ2 j2(E, g, L, n);
  const double h = L / n;
  const double c = E / (12.0 * h);

  // Bending matrix on theta_1..theta_n (Neumann at the tip), constant.
  std::vector<double> sub(n, -c), diag(n, 2.0 * c), sup(n, -c);
  sub[0] = 0.0;
  sup[n - 1] = 0.0;
  diag[n - 1] = c;

  auto scaled_sup = [&](const std::vector<double> &grad) {
    double m = 0.0;
    for (int k = 1; k <= n; ++k) m = std::max(m, std::abs(grad[k]) / j2.weight(k));
    return m;
  };

  std::vector<double> th(n + 1, 0.0);
  std::vector<double> grad = j2.gradient(th);
  double res = scaled_sup(grad);
  double jv = j2.value(th);
  int it = 0;
  while (res > tol) {
    if (++it > max_iters) {
      ElasticaSolution sol = make_elastica(E, L, th);
      sol.iterations = it - 1;
      sol.residual = res;
      sol.J2 = J2_eval(sol, g, E);
      return sol;
    }
    std::vector<double> rhs(n);
    for (int k = 1; k <= n; ++k) rhs[k - 1] = -grad[k];
    const auto d = detail::solve_tridiagonal(sub, diag, sup, rhs);
    double slope = 0.0;
    for (int k = 1; k <= n; ++k) slope += grad[k] * d[k - 1];
    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 50; ++ls, alpha *= 0.5) {
      std::vector<double> trial = th;
      for (int k = 1; k <= n; ++k) trial[k] += alpha * d[k - 1];
      const double jt = j2.value(trial);
      auto gt = j2.gradient(trial);
      const double rt = scaled_sup(gt);
      if (jt <= jv + 1e-4 * alpha * slope || rt < res) {
        th = std::move(trial);
        grad = std::move(gt);
        jv = jt;
        res = rt;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  ElasticaSolution sol = make_elastica(E, L, std::move(th));
  sol.converged = res <= tol;
  sol.iterations = it;
  sol.residual = res;
  sol.J2 = J2_eval(sol, g, E);
  return sol;
}

}  // namespace thinbeam
