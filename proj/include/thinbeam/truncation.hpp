#pragma once

// Lipschitz truncation of grid functions: a discrete Hardy-Littlewood maximal
// function of |grad u|, selection of the truncation level by the averaging
// argument over [a, A], McShane extension off the good set, and the thin
// rectangle variant that reflects (0,L) x (-h/2, h/2) across the unit strip
// and keeps the reflected copy with the smallest bad set.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "thinbeam/errors.hpp"

namespace thinbeam {

/// Samples on a uniform nx x ny node grid (row-major, rows along x2), with m
/// interleaved components per node.
struct GridFunction {
  int nx = 0;
  int ny = 0;
  double dx = 1.0;
  double dy = 1.0;
  int m = 1;
  std::vector<double> values;

  static GridFunction zeros(int nx, int ny, double dx, double dy, int m = 1) {
    if (nx < 2 || ny < 2 || m < 1) throw ConfigError("grid function needs at least 2x2 nodes");
    if (!(dx > 0.0) || !(dy > 0.0)) throw ConfigError("grid spacings must be positive");
    return {nx, ny, dx, dy, m, std::vector<double>(static_cast<std::size_t>(nx) * ny * m, 0.0)};
  }

  std::size_t index(int i, int j, int c = 0) const { return (static_cast<std::size_t>(j) * nx + i) * m + c; }
  double operator()(int i, int j, int c = 0) const { return values[index(i, j, c)]; }
  double &operator()(int i, int j, int c = 0) { return values[index(i, j, c)]; }
  int num_nodes() const { return nx * ny; }

  /// Trapezoid weight of node (i, j).
  double weight(int i, int j) const {
    return dx * dy * ((i == 0 || i == nx - 1) ? 0.5 : 1.0) * ((j == 0 || j == ny - 1) ? 0.5 : 1.0);
  }
  double area() const { return dx * (nx - 1) * dy * (ny - 1); }
};

/// Forward difference in x (backward at the last column) of component c.
inline double diff_x(const GridFunction &u, int i, int j, int c) {
  return i + 1 < u.nx ? (u(i + 1, j, c) - u(i, j, c)) / u.dx : (u(i, j, c) - u(i - 1, j, c)) / u.dx;
}
inline double diff_y(const GridFunction &u, int i, int j, int c) {
  return j + 1 < u.ny ? (u(i, j + 1, c) - u(i, j, c)) / u.dy : (u(i, j, c) - u(i, j - 1, c)) / u.dy;
}

/// |grad u| at every node, Frobenius norm over components.
inline GridFunction gradient_magnitude(const GridFunction &u) {
  GridFunction g = GridFunction::zeros(u.nx, u.ny, u.dx, u.dy, 1);
  for (int j = 0; j < u.ny; ++j)
    for (int i = 0; i < u.nx; ++i) {
      double s = 0.0;
      for (int c = 0; c < u.m; ++c) {
        const double a = diff_x(u, i, j, c), b = diff_y(u, i, j, c);
        s += a * a + b * b;
      }
      g(i, j) = std::sqrt(s);
    }
  return g;
}

/// Largest |grad u| when the x2-difference at each node may be taken forward
/// or backward; bounds the gradient of every (possibly flipped) row window.
inline double max_gradient_either_side(const GridFunction &u) {
  double best = 0.0;
  for (int j = 0; j < u.ny; ++j)
    for (int i = 0; i < u.nx; ++i) {
      double sx = 0.0, sf = 0.0, sb = 0.0;
      for (int c = 0; c < u.m; ++c) {
        const double a = diff_x(u, i, j, c);
        sx += a * a;
        const double f = j + 1 < u.ny ? (u(i, j + 1, c) - u(i, j, c)) / u.dy : 0.0;
        const double b = j > 0 ? (u(i, j, c) - u(i, j - 1, c)) / u.dy : 0.0;
        sf += f * f;
        sb += b * b;
      }
      best = std::max(best, std::sqrt(sx + std::max(sf, sb)));
    }
  return best;
}

inline double max_value(const GridFunction &f) {
  double m = 0.0;
  for (double v : f.values) m = std::max(m, v);
  return m;
}

/// Trapezoid integral of a scalar grid function raised to p.
inline double integral_pow(const GridFunction &f, double p) {
  double s = 0.0;
  for (int j = 0; j < f.ny; ++j)
    for (int i = 0; i < f.nx; ++i) s += f.weight(i, j) * std::pow(f(i, j), p);
  return s;
}

/// Radii 0, r0, r0 sqrt2, ... up to the first one reaching the diagonal,
/// r0 = min(dx, dy).
inline std::vector<double> radius_ladder(const GridFunction &f) {
  const double diam = std::hypot(f.dx * (f.nx - 1), f.dy * (f.ny - 1));
  std::vector<double> r{0.0};
  for (double R = std::min(f.dx, f.dy); ; R *= std::sqrt(2.0)) {
    r.push_back(R);
    if (R >= diam) break;
  }
  return r;
}

/// Maximal function over the radius ladder: the largest mean of the node
/// values inside the discrete Euclidean ball B(x, R) intersected with the grid.
inline GridFunction maximal_function(const GridFunction &g) {
  if (g.m != 1) throw ConfigError("maximal_function expects a scalar grid function");
  for (double v : g.values)
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("maximal_function expects finite nonnegative values");
  const int nx = g.nx, ny = g.ny;
  // prefix[j][i] = sum of row j over columns < i
  std::vector<double> prefix(static_cast<std::size_t>(ny) * (nx + 1), 0.0);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      prefix[static_cast<std::size_t>(j) * (nx + 1) + i + 1] = prefix[static_cast<std::size_t>(j) * (nx + 1) + i] + g(i, j);
  GridFunction f = g;
  std::vector<int> half;
  for (double R : radius_ladder(g)) {
    if (R == 0.0) continue;
    const int rows = static_cast<int>(std::floor(R / g.dy + 1e-12));
    half.assign(rows + 1, 0);
    for (int d = 0; d <= rows; ++d) {
      const double rem = R * R - (d * g.dy) * (d * g.dy);
      half[d] = static_cast<int>(std::floor(std::sqrt(std::max(rem, 0.0)) / g.dx + 1e-12));
    }
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        double sum = 0.0;
        long count = 0;
        const int j0 = std::max(0, j - rows), j1 = std::min(ny - 1, j + rows);
        for (int jj = j0; jj <= j1; ++jj) {
          const int w = half[std::abs(jj - j)];
          const int i0 = std::max(0, i - w), i1 = std::min(nx - 1, i + w);
          const double *row = &prefix[static_cast<std::size_t>(jj) * (nx + 1)];
          sum += row[i1 + 1] - row[i0];
          count += i1 - i0 + 1;
        }
        f(i, j) = std::max(f(i, j), sum / count);
      }
  }
  return f;
}

struct LambdaChoice {
  double lambda = 0.0;
  double g_value = 0.0;                 // lambda^p |{f > lambda}|
  std::vector<double> candidates;
  std::vector<double> g_candidates;
  std::vector<unsigned char> level_set; // f > lambda
  double slack = 1.0;                   // (A/a)^{p/63}
};

inline constexpr int kLambdaCandidates = 64;

/// Minimizes g(t) = t^p |{f > t}| over 64 geometric candidates in [a, A];
/// returns the first minimizer. The averaging argument gives
///   g(lambda) p ln(A/a) <= slack \int f^p.
inline LambdaChoice select_lambda(const GridFunction &f, double a, double A, double p = 2.0) {
  if (!(a > 0.0) || !(a < A)) throw ConfigError("truncation range needs 0 < a < A (truncation.a, truncation.A)");
  if (!(p > 1.0)) throw ConfigError("truncation.p must exceed 1");
  LambdaChoice out;
  const double ratio = A / a;
  out.slack = std::pow(ratio, p / (kLambdaCandidates - 1));
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < kLambdaCandidates; ++k) {
    const double t = k == kLambdaCandidates - 1 ? A : a * std::pow(ratio, static_cast<double>(k) / (kLambdaCandidates - 1));
    double area = 0.0;
    for (int j = 0; j < f.ny; ++j)
      for (int i = 0; i < f.nx; ++i)
        if (f(i, j) > t) area += f.weight(i, j);
    const double gv = std::pow(t, p) * area;
    out.candidates.push_back(t);
    out.g_candidates.push_back(gv);
    if (gv < best) {
      best = gv;
      out.lambda = t;
      out.g_value = gv;
    }
  }
  out.level_set.assign(f.num_nodes(), 0);
  for (int n = 0; n < f.num_nodes(); ++n) out.level_set[n] = f.values[n] > out.lambda;
  return out;
}

namespace detail {

/// v(p) = min over good q of u(q) + K (|i_p - i_q| dx + |j_p - j_q| dy), by
/// separable forward/backward sweeps. Component c of u.
inline void mcshane_l1(const GridFunction &u, const std::vector<unsigned char> &good, int c, double K,
                       std::vector<double> &v) {
  const double inf = std::numeric_limits<double>::infinity();
  const int nx = u.nx, ny = u.ny;
  v.assign(static_cast<std::size_t>(nx) * ny, inf);
  for (int n = 0; n < nx * ny; ++n)
    if (good[n]) v[n] = u.values[static_cast<std::size_t>(n) * u.m + c];
  const double sx = K * u.dx, sy = K * u.dy;
  for (int j = 0; j < ny; ++j) {
    double *row = &v[static_cast<std::size_t>(j) * nx];
    for (int i = 1; i < nx; ++i) row[i] = std::min(row[i], row[i - 1] + sx);
    for (int i = nx - 2; i >= 0; --i) row[i] = std::min(row[i], row[i + 1] + sx);
  }
  for (int i = 0; i < nx; ++i) {
    for (int j = 1; j < ny; ++j) v[j * nx + i] = std::min(v[j * nx + i], v[(j - 1) * nx + i] + sy);
    for (int j = ny - 2; j >= 0; --j) v[j * nx + i] = std::min(v[j * nx + i], v[(j + 1) * nx + i] + sy);
  }
}

/// True when the extension with constant K reproduces u on the good set,
/// i.e. K is at least the l1-Lipschitz constant of u restricted to it.
inline bool reproduces(const GridFunction &u, const std::vector<unsigned char> &good, int c, double K,
                       std::vector<double> &scratch) {
  mcshane_l1(u, good, c, K, scratch);
  for (int n = 0; n < u.num_nodes(); ++n)
    if (good[n] && scratch[n] < u.values[static_cast<std::size_t>(n) * u.m + c]) return false;
  return true;
}

}  // namespace detail

struct TruncationOutcome {
  GridFunction v;
  std::vector<unsigned char> bad;  // complement of the good set {f <= t}
  double t = 0.0;                  // final good-set threshold
  double K = 0.0;                  // l1-Lipschitz constant of u on the good set (max over components)
  double C4 = 0.0;                 // K / t
  int rescalings = 0;
};

/// Lipschitz constant of component c of u on `good` in the weighted l1
/// metric, by bisection on the reproduction test (relative accuracy 1e-12).
inline double good_set_lipschitz(const GridFunction &u, const std::vector<unsigned char> &good, int c) {
  double lo_v = std::numeric_limits<double>::infinity(), hi_v = -lo_v;
  for (int n = 0; n < u.num_nodes(); ++n)
    if (good[n]) {
      const double x = u.values[static_cast<std::size_t>(n) * u.m + c];
      lo_v = std::min(lo_v, x);
      hi_v = std::max(hi_v, x);
    }
  if (!(hi_v > lo_v)) return 0.0;
  std::vector<double> scratch;
  double lo = 0.0, hi = (hi_v - lo_v) / std::min(u.dx, u.dy);
  while (!detail::reproduces(u, good, c, hi, scratch)) hi *= 2.0;  // guards rounding at the bracket
  for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (detail::reproduces(u, good, c, mid, scratch) ? hi : lo) = mid;
  }
  return hi;
}

/// One McShane pass from {f <= t}: u on the good set, the l1 upper extension
/// with the measured good-set constant elsewhere. Throws on an empty good set.
inline TruncationOutcome extend_from_good_set(const GridFunction &u, const GridFunction &f, double t) {
  TruncationOutcome out;
  out.bad.resize(u.num_nodes());
  std::vector<unsigned char> good(u.num_nodes());
  bool any = false;
  for (int n = 0; n < u.num_nodes(); ++n) {
    good[n] = f.values[n] <= t;
    out.bad[n] = !good[n];
    any = any || good[n];
  }
  if (!any) throw TruncationError("good set {f <= t} is empty at t = " + std::to_string(t) + "; raise A");
  out.v = u;
  std::vector<double> comp;
  for (int c = 0; c < u.m; ++c) {
    const double Kc = good_set_lipschitz(u, good, c);
    out.K = std::max(out.K, Kc);
    detail::mcshane_l1(u, good, c, Kc, comp);
    for (int n = 0; n < u.num_nodes(); ++n)
      if (!good[n]) out.v.values[static_cast<std::size_t>(n) * u.m + c] = comp[n];
  }
  out.t = t;
  out.C4 = out.K / t;
  return out;
}

/// McShane extension of u from the good set {f <= t}, f the maximal function
/// of |grad u|. While the discrete gradient of the result exceeds lambda the
/// threshold t is lowered by 0.8 (the good set shrinks); an empty good set is an error.
inline TruncationOutcome lipschitz_truncate(const GridFunction &u, double lambda, double t,
                                            const GridFunction *maximal = nullptr) {
  if (!(lambda > 0.0) || !(t > 0.0)) throw ConfigError("lipschitz_truncate needs lambda > 0 and t > 0");
  GridFunction fstore;
  if (maximal == nullptr) {
    fstore = maximal_function(gradient_magnitude(u));
    maximal = &fstore;
  }
  for (int round = 0; round < 400; ++round) {
    TruncationOutcome out = extend_from_good_set(u, *maximal, t);
    if (max_value(gradient_magnitude(out.v)) <= lambda) {
      out.rescalings = round;
      return out;
    }
    t *= 0.8;
  }
  throw TruncationError("gradient bound not reached after shrinking the good set");
}

struct TruncationResult {
  double lambda = 0.0;
  GridFunction v;
  std::vector<unsigned char> bad;  // reported bad set on the thin grid
  double bad_area = 0.0;           // area {u != v}
  double dirichlet = 0.0;          // \int |grad u|^2 on the thin grid
  double q = 0.0;                  // lambda^2 area{u != v} ln(A/a) / dirichlet
  int strips = 0;                  // 2 N_h + 1
  int chosen_strip = 0;            // i0 in [-N_h, N_h]
  std::vector<double> strip_bad;   // bad measure per strip
  double total_bad = 0.0;          // bad measure on the extended grid
  double g_lambda = 0.0;           // lambda^p |{C' f > lambda}| on the extended grid
  double slack = 1.0;
  double integral_fp = 0.0;        // \int (C' f)^p on the extended grid
  double extended_dirichlet = 0.0;
  double scale = 1.0;              // C' : lambda is selected for C' f, good set {C' f <= lambda}
  double t = 0.0;                  // lambda / C'
  double C4 = 0.0;
  int rescalings = 0;
};

/// Largest N with h N + h/2 <= 1/2.
inline int reflection_count(double h) {
  return static_cast<int>(std::floor((0.5 - 0.5 * h) / h + 1e-12));
}

/// Even reflection of a thin-grid function across strips i = -N..N stacked
/// along x2; strip i is flipped when i is odd.
inline GridFunction reflect_extend(const GridFunction &u, int N) {
  const int cells = u.ny - 1;
  GridFunction e = GridFunction::zeros(u.nx, (2 * N + 1) * cells + 1, u.dx, u.dy, u.m);
  for (int J = 0; J < e.ny; ++J) {
    const int strip = std::min(J / cells, 2 * N);
    const int local = J - strip * cells;
    const int i = strip - N;
    const int src = (i % 2 == 0) ? local : cells - local;
    for (int c0 = 0; c0 < u.nx; ++c0)
      for (int c = 0; c < u.m; ++c) e(c0, J, c) = u(c0, src, c);
  }
  return e;
}

/// Reflected extension of a thin-grid function with its gradient magnitude
/// and maximal function; independent of the range [a, A].
struct ThinExtension {
  GridFunction u;      // original samples on (0,L) x (-h/2, h/2)
  double h = 0.0;
  int N = 0;           // strips i = -N..N
  GridFunction ext;
  GridFunction grad;
  GridFunction maximal;
};

inline ThinExtension prepare_thin(const GridFunction &u, double h) {
  if (!(h > 0.0)) throw ConfigError("truncation.h must be positive");
  const int N = reflection_count(h);
  if (N < 1) throw ConfigError("fewer than 3 strips of height h fit in (-1/2, 1/2)");
  ThinExtension t;
  t.u = u;
  t.h = h;
  t.N = N;
  t.ext = reflect_extend(u, N);
  t.grad = gradient_magnitude(t.ext);
  t.maximal = maximal_function(t.grad);
  return t;
}

/// Truncation on the thin rectangle (0,L) x (-h/2, h/2): truncate the
/// reflected extension, then keep the strip with the smallest bad measure.
inline TruncationResult thin_truncate(const ThinExtension &te, double a, double A, double p = 2.0) {
  if (!(a > 0.0) || !(a < A)) throw ConfigError("truncation range needs 0 < a < A (truncation.a, truncation.A)");
  const GridFunction &u = te.u;
  const GridFunction &ext = te.ext;
  const GridFunction &f = te.maximal;
  const int N = te.N;
  const int cells = u.ny - 1;
  TruncationResult res;
  res.strips = 2 * N + 1;

  res.integral_fp = integral_pow(f, p);
  res.extended_dirichlet = integral_pow(te.grad, 2.0);

  // Select lambda for the rescaled maximal function C' f and extend from
  // {C' f <= lambda}; C' starts at sqrt(2m), the l1-McShane factor, and grows
  // by 1.25 until the discrete gradient bound holds.
  TruncationOutcome tr;
  double scale = std::sqrt(2.0 * u.m);
  for (int round = 0;; ++round) {
    if (round == 200) throw TruncationError("gradient bound not reached after rescaling");
    GridFunction fs = f;
    for (double &x : fs.values) x *= scale;
    const LambdaChoice choice = select_lambda(fs, a, A, p);
    tr = extend_from_good_set(ext, f, choice.lambda / scale);
    if (max_gradient_either_side(tr.v) <= choice.lambda) {
      res.lambda = choice.lambda;
      res.g_lambda = choice.g_value;
      res.slack = choice.slack;
      res.rescalings = round;
      break;
    }
    scale *= 1.25;
  }
  res.scale = scale;
  res.integral_fp *= std::pow(scale, p);
  res.t = tr.t;
  res.C4 = tr.C4;

  res.strip_bad.assign(res.strips, 0.0);
  for (int J = 0; J < ext.ny; ++J)
    for (int I = 0; I < ext.nx; ++I) {
      if (!tr.bad[static_cast<std::size_t>(J) * ext.nx + I]) continue;
      const double wx = ext.dx * ((I == 0 || I == ext.nx - 1) ? 0.5 : 1.0);
      res.total_bad += ext.weight(I, J);
      // node rows on a strip boundary count half for each neighbouring strip
      const int s = J / cells, local = J % cells;
      if (local == 0) {
        if (s > 0) res.strip_bad[s - 1] += 0.5 * wx * ext.dy;
        if (s < res.strips) res.strip_bad[s] += 0.5 * wx * ext.dy;
      } else {
        res.strip_bad[s] += wx * ext.dy;
      }
    }
  const int s0 = static_cast<int>(std::min_element(res.strip_bad.begin(), res.strip_bad.end()) - res.strip_bad.begin());
  res.chosen_strip = s0 - N;
  const bool flip = res.chosen_strip % 2 != 0;

  res.v = u;
  res.bad.assign(u.num_nodes(), 0);
  for (int j = 0; j < u.ny; ++j) {
    const int J = s0 * cells + (flip ? cells - j : j);
    for (int i = 0; i < u.nx; ++i) {
      res.bad[static_cast<std::size_t>(j) * u.nx + i] = tr.bad[static_cast<std::size_t>(J) * ext.nx + i];
      for (int c = 0; c < u.m; ++c) res.v(i, j, c) = tr.v(i, J, c);
    }
  }
  for (int j = 0; j < u.ny; ++j)
    for (int i = 0; i < u.nx; ++i) {
      bool differs = false;
      for (int c = 0; c < u.m; ++c) differs = differs || res.v(i, j, c) != u(i, j, c);
      if (differs) res.bad_area += u.weight(i, j);
    }
  res.dirichlet = integral_pow(gradient_magnitude(u), 2.0);
  res.q = res.dirichlet > 0.0 ? res.lambda * res.lambda * res.bad_area * std::log(A / a) / res.dirichlet : 0.0;
  return res;
}

inline TruncationResult thin_truncate(const GridFunction &u, double h, double a, double A, double p = 2.0) {
  if (!(a > 0.0) || !(a < A)) throw ConfigError("truncation range needs 0 < a < A (truncation.a, truncation.A)");
  return thin_truncate(prepare_thin(u, h), a, A, p);
}

/// Seeded test field on (0,L) x (-h/2, h/2) with two components: a faint
/// four-mode background plus one sharp Gaussian bump, rescaled so that the
/// mean of |grad u| is `mean_gradient`. The rescaling factor is measured on a
/// fixed reference sampling, so every resolution samples the same function.
struct RoughFieldSpec {
  double L = 1.0;
  double h = 0.125;
  double mean_gradient = 1.0;
  double sigma_lo = 0.018;
  double sigma_hi = 0.03;
  double background = 0.003;
  int reference_cells_x = 256;
  int reference_cells_y = 32;
  bool with_bump = true;  // false: background modes only
};

namespace detail {

inline double unit_draw(std::mt19937_64 &rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline GridFunction raw_rough_field(std::uint64_t seed, int cx, int cy, const RoughFieldSpec &s) {
  std::mt19937_64 rng(seed);
  constexpr double two_pi = 6.283185307179586;
  double amp[2][4], phase[2][4];
  for (int c = 0; c < 2; ++c)
    for (int k = 0; k < 4; ++k) {
      amp[c][k] = s.background * (2.0 * unit_draw(rng) - 1.0) / (k + 1);
      phase[c][k] = two_pi * unit_draw(rng);
    }
  const double sigma = s.sigma_lo + (s.sigma_hi - s.sigma_lo) * unit_draw(rng);
  const double dir = two_pi * unit_draw(rng);
  const double x0 = s.L * (0.1 + 0.8 * unit_draw(rng));
  const double y0 = 0.25 * s.h * (2.0 * unit_draw(rng) - 1.0);
  const double peak[2] = {sigma * std::cos(dir), sigma * std::sin(dir)};
  GridFunction g = GridFunction::zeros(cx + 1, cy + 1, s.L / cx, s.h / cy, 2);
  for (int j = 0; j <= cy; ++j)
    for (int i = 0; i <= cx; ++i) {
      const double x = i * g.dx, y = -0.5 * s.h + j * g.dy;
      const double bump = std::exp(-((x - x0) * (x - x0) + (y - y0) * (y - y0)) / (2.0 * sigma * sigma));
      for (int c = 0; c < 2; ++c) {
        double v = s.with_bump ? peak[c] * bump : 0.0;
        for (int k = 0; k < 4; ++k) v += amp[c][k] * std::sin(two_pi * (k + 1) * x / s.L + phase[c][k]);
        g(i, j, c) = v;
      }
    }
  return g;
}

}  // namespace detail

inline double mean_gradient(const GridFunction &u) {
  const GridFunction g = gradient_magnitude(u);
  double m = 0.0, w = 0.0;
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      m += g.weight(i, j) * g(i, j);
      w += g.weight(i, j);
    }
  return m / w;
}

inline GridFunction rough_field(std::uint64_t seed, int cells_x, int cells_y, const RoughFieldSpec &s) {
  if (cells_x < 4 || cells_y < 2) throw ConfigError("rough field needs at least 4 x 2 cells");
  if (!(s.L > 0.0) || !(s.h > 0.0) || !(s.mean_gradient > 0.0) || !(s.sigma_lo > 0.0) || s.sigma_hi < s.sigma_lo)
    throw ConfigError("rough field: invalid shape parameters");
  const double raw = mean_gradient(detail::raw_rough_field(seed, s.reference_cells_x, s.reference_cells_y, s));
  if (!(raw > 0.0)) throw ConfigError("rough field is identically constant; raise truncation.background");
  const double scale = s.mean_gradient / raw;
  GridFunction g = detail::raw_rough_field(seed, cells_x, cells_y, s);
  for (double &v : g.values) v *= scale;
  return g;
}

/// Text form: a header line `nx,ny,dx,dy`, the values line, then ny rows of
/// nx*m comma-separated samples (components interleaved).
inline void write_grid_csv(std::ostream &os, const GridFunction &g) {
  char buf[64];
  os << "nx,ny,dx,dy\n";
  os << g.nx << ',' << g.ny << ',';
  std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", g.dx, g.dy);
  os << buf;
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i)
      for (int c = 0; c < g.m; ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", g(i, j, c));
        os << ((i == 0 && c == 0) ? "" : ",") << buf;
      }
    os << '\n';
  }
}

inline GridFunction read_grid_csv(std::istream &is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("nx,ny,dx,dy", 0) != 0) throw ConfigError("grid csv: missing header nx,ny,dx,dy");
  if (!std::getline(is, line)) throw ConfigError("grid csv: missing dimensions line");
  int nx = 0, ny = 0;
  double dx = 0.0, dy = 0.0;
  {
    std::istringstream ss(line);
    char c1, c2, c3;
    if (!(ss >> nx >> c1 >> ny >> c2 >> dx >> c3 >> dy)) throw ConfigError("grid csv: malformed dimensions line");
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> r;
    std::istringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        r.push_back(std::stod(cell));
      } catch (const std::exception &) {
        throw ConfigError("grid csv: bad number '" + cell + "'");
      }
    }
    rows.push_back(std::move(r));
  }
  if (static_cast<int>(rows.size()) != ny) throw ConfigError("grid csv: expected " + std::to_string(ny) + " rows");
  if (nx < 2 || rows.front().size() % nx != 0) throw ConfigError("grid csv: row length is not a multiple of nx");
  const int m = static_cast<int>(rows.front().size()) / nx;
  GridFunction g = GridFunction::zeros(nx, ny, dx, dy, m);
  for (int j = 0; j < ny; ++j) {
    if (static_cast<int>(rows[j].size()) != nx * m) throw ConfigError("grid csv: ragged row " + std::to_string(j));
    for (int k = 0; k < nx * m; ++k) {
      if (!std::isfinite(rows[j][k])) throw ConfigError("grid csv: non-finite value");
      g.values[static_cast<std::size_t>(j) * nx * m + k] = rows[j][k];
    }
  }
  return g;
}

}  // namespace thinbeam
