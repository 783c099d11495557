#pragma once

// Quantities built from a strip solution y on the rescaled domain:
//   slab rotations Q (nearest rotation to the slab mean of grad_h y),
//   mollified rotations R = pi(eta_h * Q) with angle theta_h,
//   G = (R^T grad_h y - Id)/h,  E = DW(Id + hG)/h,
//   z = y/h - (1/h) \int_0^{x1} R e1 - x2 R e2,
// their x2-moments, and residuals of the identities they satisfy in the limit.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "thinbeam/elastica.hpp"
#include "thinbeam/energy.hpp"
#include "thinbeam/errors.hpp"
#include "thinbeam/load.hpp"
#include "thinbeam/mat2.hpp"
#include "thinbeam/strip.hpp"

namespace thinbeam {

/// Bump 30 s^2 (1-s)^2 on (0,1) and its primitive.
inline double bump(double s) { return (s <= 0.0 || s >= 1.0) ? 0.0 : 30.0 * s * s * (1.0 - s) * (1.0 - s); }
inline double bump_cdf(double s) {
  if (s <= 0.0) return 0.0;
  if (s >= 1.0) return 1.0;
  return s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
}

/// Piecewise-constant slab rotations and their mollification at scale h.
struct RotationProfile {
  double L = 1.0;
  double h = 0.1;
  int slabs = 0;
  double width = 0.0;
  std::vector<double> slab_angle;  // unwrapped, one per slab
  bool mollified = false;
  std::vector<double> node_x;      // x1 nodes of the mesh (filled when mollified)
  std::vector<double> theta;       // unwrapped theta_h at node_x

  int slab_of(double x1) const { return std::clamp(static_cast<int>(std::floor(x1 / width)), 0, slabs - 1); }
  double slab_begin(int k) const { return k == 0 ? -std::numeric_limits<double>::infinity() : k * width; }
  double slab_end(int k) const { return k == slabs - 1 ? std::numeric_limits<double>::infinity() : (k + 1) * width; }

  /// Angle of the piecewise-constant Q at x1.
  double slab_angle_at(double x1) const { return slab_angle[slab_of(x1)]; }

  /// Mollified matrix relative to the reference slab angle: (c, s) with
  /// eta_h * Q = R(ref) [[c, -s], [s, c]], and the x1-derivatives (dc, ds).
  struct Local {
    double ref, c, s, dc, ds;
  };

  Local local(double x1) const {
    Local out{slab_angle_at(x1), 0.0, 0.0, 0.0, 0.0};
    const int k1 = slab_of(x1), k0 = slab_of(x1 - h);
    for (int k = k0; k <= k1; ++k) {
      const double a = slab_begin(k), b = slab_end(k);
      const double wgt = bump_cdf((x1 - a) / h) - bump_cdf((x1 - b) / h);
      const double dw = (bump((x1 - a) / h) - bump((x1 - b) / h)) / h;
      const double d = slab_angle[k] - out.ref;
      out.c += wgt * std::cos(d);
      out.s += wgt * std::sin(d);
      out.dc += dw * std::cos(d);
      out.ds += dw * std::sin(d);
    }
    return out;
  }

  /// theta_h(x1) = angle of pi(eta_h * Q)(x1), on the branch of the slab angles.
  double angle_at(double x1) const {
    const Local l = local(x1);
    if (!(l.c * l.c + l.s * l.s > 0.0) || !(l.c > 0.0 || std::abs(l.s) > 0.0))
      throw DiagnosticError("mollified rotation degenerates at x1 = " + std::to_string(x1));
    return l.ref + std::atan2(l.s, l.c);
  }

  /// theta_h'(x1), exact derivative of the mollified angle.
  double derivative_at(double x1) const {
    const Local l = local(x1);
    return (l.c * l.ds - l.s * l.dc) / (l.c * l.c + l.s * l.s);
  }

  Rotation2 rotation_at(double x1) const { return Rotation2(angle_at(x1)); }
};

/// Slab count floor(L/h), so every slab has width in [h, 2h).
inline int slab_count(double L, double h) {
  const int k = static_cast<int>(std::floor(L / h + 1e-12));
  if (k < 1) throw ConfigError("slab partition needs h <= L");
  return k;
}

/// Per slab, the nearest rotation to the mean of grad_h y over the slab's
/// quadrature points. Angles are unwrapped from slab to slab.
inline RotationProfile slab_rotations(const DeformationField &y) {
  const StripMesh &m = y.mesh;
  RotationProfile p;
  p.L = m.L;
  p.h = y.h;
  p.slabs = slab_count(m.L, y.h);
  p.width = m.L / p.slabs;
  std::vector<Mat2> mean(p.slabs);
  std::vector<int> count(p.slabs, 0);
  const auto shapes = shapes_at_qps(m);
  for (int e = 0; e < m.num_elements(); ++e)
    for (int q = 0; q < 4; ++q) {
      const int k = p.slab_of(m.qp_position(e, q).x);
      mean[k] += y.displacement_gradient(e, q, shapes);
      ++count[k];
    }
  p.slab_angle.resize(p.slabs);
  double prev = 0.0;
  for (int k = 0; k < p.slabs; ++k) {
    if (count[k] == 0) throw DiagnosticError("slab " + std::to_string(k) + " contains no quadrature points");
    const Mat2 a = (1.0 / count[k]) * mean[k];
    const double d = detail::det_offset(a);
    if (!(d > 0.0))
      throw DiagnosticError("slab " + std::to_string(k) + ": mean scaled gradient has det " + std::to_string(d));
    const double ang = std::atan2(a.a21 - a.a12, 2.0 + a.a11 + a.a22);
    p.slab_angle[k] = k == 0 ? ang : prev + wrap_angle(ang - prev);
    prev = p.slab_angle[k];
  }
  return p;
}

/// Mollifies the slab rotations with eta_h (supported behind the point, Q
/// extended constantly past both ends), projects onto SO(2) and samples
/// theta_h at the x1-nodes of `mesh`.
inline RotationProfile smooth_rotations(RotationProfile p, double h, const StripMesh &mesh) {
  if (!(h > 0.0)) throw ConfigError("mollification scale must be positive");
  p.h = h;
  p.mollified = true;
  p.node_x.resize(mesh.nx + 1);
  p.theta.resize(mesh.nx + 1);
  for (int i = 0; i <= mesh.nx; ++i) {
    p.node_x[i] = mesh.x1(i);
    p.theta[i] = p.angle_at(p.node_x[i]);
  }
  return p;
}

/// Quadrature-point tensor field with x2-moments per quadrature column.
struct TensorField {
  StripMesh mesh;
  std::vector<Mat2> values;  // index e*4 + q
  std::vector<double> column_x;
  std::vector<Mat2> bar;     // \int field dx2
  std::vector<Mat2> hat;     // \int x2 field dx2

  const Mat2 &at(int e, int q) const { return values[static_cast<std::size_t>(e) * 4 + q]; }
};

inline void compute_moments(TensorField &f) {
  const StripMesh &m = f.mesh;
  const int nc = m.num_qp_columns();
  f.column_x.resize(nc);
  f.bar.assign(nc, Mat2{});
  f.hat.assign(nc, Mat2{});
  for (int c = 0; c < nc; ++c) f.column_x[c] = m.qp_column_x1(c);
  const double wy = 0.5 * m.dy();
  for (int e = 0; e < m.num_elements(); ++e)
    for (int q = 0; q < 4; ++q) {
      const int c = m.qp_column(e, q);
      const double x2 = m.qp_position(e, q).y;
      f.bar[c] += wy * f.at(e, q);
      f.hat[c] += (wy * x2) * f.at(e, q);
    }
}

inline TensorField make_field(const StripMesh &m, std::vector<Mat2> values) {
  TensorField f{m, std::move(values), {}, {}, {}};
  compute_moments(f);
  return f;
}

inline void require_diagnostic_mesh(const StripMesh &m) {
  if (m.ny < 4) throw ConfigError("diagnostics need strip.ny >= 4");
}

/// G = (R^T grad_h y - Id)/h at every quadrature point.
inline TensorField strain_field(const DeformationField &y, const RotationProfile &r) {
  const StripMesh &m = y.mesh;
  const auto shapes = shapes_at_qps(m);
  std::vector<Mat2> g(static_cast<std::size_t>(m.num_elements()) * 4);
  for (int e = 0; e < m.num_elements(); ++e)
    for (int q = 0; q < 4; ++q) {
      const Rotation2 rt(-r.angle_at(m.qp_position(e, q).x));
      const Mat2 a = y.displacement_gradient(e, q, shapes);
      g[static_cast<std::size_t>(e) * 4 + q] = (1.0 / y.h) * (rt.minus_identity() + rt.matrix() * a);
    }
  return make_field(m, std::move(g));
}

struct StressFields {
  TensorField E;   // DW(Id + hG)/h
  TensorField LG;  // linearization applied to G
};

template <StoredEnergy W>
StressFields stress_field(const TensorField &G, double h, const W &w) {
  const Linearization lin = linearize(w);
  std::vector<Mat2> e(G.values.size()), lg(G.values.size());
  for (std::size_t i = 0; i < G.values.size(); ++i) {
    const Mat2 a = h * G.values[i];
    if (!(detail::det_offset(a) > 0.0))
      throw DiagnosticError("Id + hG has non-positive determinant at quadrature point " + std::to_string(i));
    e[i] = (1.0 / h) * stress_near_identity(w, a);
    lg[i] = lin.apply(G.values[i]);
  }
  return {make_field(G.mesh, std::move(e)), make_field(G.mesh, std::move(lg))};
}

/// z at the nodes; the x1-integral is a trapezoid rule along node rows.
struct ZField {
  std::vector<Vec2> z;
  double boundary_max = 0.0;  // max_j |z(0, x2_j)|
};

inline ZField z_field(const DeformationField &y, const RotationProfile &r) {
  const StripMesh &m = y.mesh;
  ZField out;
  out.z.resize(m.num_nodes());
  // \int_0^{x1} (R - Id) e1 at each x1-node
  std::vector<Vec2> integ(m.nx + 1);
  std::vector<Mat2> rmi(m.nx + 1);
  for (int i = 0; i <= m.nx; ++i) rmi[i] = Rotation2(r.angle_at(m.x1(i))).minus_identity();
  for (int i = 1; i <= m.nx; ++i) integ[i] = integ[i - 1] + 0.5 * m.dx() * (rmi[i - 1].col(0) + rmi[i].col(0));
  for (int j = 0; j <= m.ny; ++j)
    for (int i = 0; i <= m.nx; ++i) {
      const int n = m.node(i, j);
      out.z[n] = (1.0 / y.h) * (y.u[n] - integ[i] - (y.h * m.x2(j)) * rmi[i].col(1));
      if (i == 0) out.boundary_max = std::max(out.boundary_max, norm(out.z[n]));
    }
  return out;
}

/// grad_h z at quadrature point q of element e.
inline Mat2 scaled_gradient_of(const StripMesh &m, double h, const std::vector<Vec2> &nodal, int e, int q) {
  const auto nodes = m.element_nodes(e);
  const ShapeAtQp s = shapes_at_qps(m)[q];
  Mat2 a;
  for (int k = 0; k < 4; ++k) {
    const Vec2 &v = nodal[nodes[k]];
    a.a11 += v.x * s.dn1[k];
    a.a21 += v.y * s.dn1[k];
    a.a12 += v.x * s.dn2[k] / h;
    a.a22 += v.y * s.dn2[k] / h;
  }
  return a;
}

struct IdentityResiduals {
  double h = 0.0;
  double r1 = 0.0;  // |hatG11 + theta'/12| / |theta'|
  double r2 = 0.0;  // |barE e1 + h R^T gt|
  double r3 = 0.0;  // |hatE11(L)|
  double r4 = 0.0;  // |E12 - E21|_{L1} / h
  double r5 = 0.0;  // \int |grad_h y - R|^2 / \int dist^2
};

inline constexpr double kGuard = 1e-30;

inline double column_weight(const StripMesh &m) { return 0.5 * m.dx(); }

template <StoredEnergy W>
IdentityResiduals identity_report(const DeformationField &y, const RotationProfile &r, const TensorField &G,
                                  const TensorField &E, const LoadProfile &g, const W &) {
  const StripMesh &m = y.mesh;
  IdentityResiduals out;
  out.h = y.h;
  const double wc = column_weight(m);

  double num1 = 0.0, den1 = 0.0, num2 = 0.0;
  for (int c = 0; c < m.num_qp_columns(); ++c) {
    const double x = G.column_x[c];
    const double dth = r.derivative_at(x);
    const double d1 = G.hat[c].a11 + dth / 12.0;
    num1 += wc * d1 * d1;
    den1 += wc * dth * dth;
    const Vec2 gt = -g.integral(x, m.L);
    const Vec2 v = E.bar[c].col(0) + y.h * (Rotation2(-r.angle_at(x)).matrix() * gt);
    num2 += wc * dot(v, v);
  }
  out.r1 = std::sqrt(num1) / (std::sqrt(den1) + kGuard);
  out.r2 = std::sqrt(num2);

  // linear extrapolation of hatE11 from the last two quadrature columns
  const int nc = m.num_qp_columns();
  const double xa = E.column_x[nc - 2], xb = E.column_x[nc - 1];
  const double fa = E.hat[nc - 2].a11, fb = E.hat[nc - 1].a11;
  out.r3 = std::abs(fb + (fb - fa) * (m.L - xb) / (xb - xa));

  const double wq = m.qp_weight();
  const auto shapes = shapes_at_qps(m);
  double l1 = 0.0, num5 = 0.0, den5 = 0.0;
  for (int e = 0; e < m.num_elements(); ++e)
    for (int q = 0; q < 4; ++q) {
      const Mat2 &ev = E.at(e, q);
      l1 += wq * std::abs(ev.a12 - ev.a21);
      const Mat2 a = y.displacement_gradient(e, q, shapes);
      const Mat2 rmi = Rotation2(r.angle_at(m.qp_position(e, q).x)).minus_identity();
      num5 += wq * norm_sq(a - rmi);
      den5 += wq * dist_so2_sq_offset(a);
    }
  out.r4 = l1 / y.h;
  out.r5 = (num5 == 0.0 && den5 == 0.0) ? 1.0 : num5 / std::max(den5, kGuard);
  return out;
}

/// sup|f - mean f|^2 against 2 |f|_{L2} |f'|_{L2} for f = theta_h.
struct InterpolationCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds() const { return lhs <= rhs * (1.0 + 1e-9) + 1e-300; }
};

struct DiagnosticRow {
  IdentityResiduals identities;
  double theta_err_L2 = 0.0;
  double y_err_W12 = 0.0;
  double energy_over_h2 = 0.0;
  double theta_sup = 0.0;
  InterpolationCheck interpolation;
  double G_L2 = 0.0;
  double rotation_gap_L2 = 0.0;   // |R - Q|_{L2(0,L)}
  double stress_lin_gap = 0.0;    // |E - LG|_{L1} / |G|_{L2}
  double z_boundary = 0.0;
};

/// Full set of diagnostics for one solution. `limit` may be null, in which
/// case the error columns stay 0.
template <StoredEnergy W>
DiagnosticRow diagnose(const DeformationField &y, const LoadProfile &g, const W &w,
                       const ElasticaSolution *limit = nullptr, RotationProfile *rotations_out = nullptr,
                       TensorField *G_out = nullptr, StressFields *E_out = nullptr) {
  const StripMesh &m = y.mesh;
  require_diagnostic_mesh(m);
  const RotationProfile rot = smooth_rotations(slab_rotations(y), y.h, m);
  const TensorField G = strain_field(y, rot);
  const StressFields S = stress_field(G, y.h, w);
  DiagnosticRow row;
  row.identities = identity_report(y, rot, G, S.E, g, w);
  row.energy_over_h2 = scaled_energy(y, g, w).elastic / (y.h * y.h);
  row.z_boundary = z_field(y, rot).boundary_max;

  const double wc = column_weight(m);
  const double wq = m.qp_weight();
  double f_l2 = 0.0, df_l2 = 0.0, mean = 0.0, gap = 0.0;
  for (int c = 0; c < m.num_qp_columns(); ++c) {
    const double x = m.qp_column_x1(c);
    const double th = rot.angle_at(x), dth = rot.derivative_at(x);
    f_l2 += wc * th * th;
    df_l2 += wc * dth * dth;
    mean += wc * th;
    const double d = th - rot.slab_angle_at(x);
    gap += wc * 8.0 * std::sin(0.5 * d) * std::sin(0.5 * d);
  }
  mean /= m.L;
  row.rotation_gap_L2 = std::sqrt(gap);
  double sup = 0.0, sup_dev = 0.0;
  for (std::size_t i = 0; i < rot.theta.size(); ++i) {
    sup = std::max(sup, std::abs(rot.theta[i]));
    sup_dev = std::max(sup_dev, std::abs(rot.theta[i] - mean));
  }
  row.theta_sup = sup;
  row.interpolation = {sup_dev * sup_dev, 2.0 * std::sqrt(f_l2) * std::sqrt(df_l2)};

  double g2 = 0.0, diff1 = 0.0;
  for (std::size_t i = 0; i < G.values.size(); ++i) {
    g2 += wq * norm_sq(G.values[i]);
    const Mat2 d = S.E.values[i] - S.LG.values[i];
    diff1 += wq * (std::abs(d.a11) + std::abs(d.a12) + std::abs(d.a21) + std::abs(d.a22));
  }
  row.G_L2 = std::sqrt(g2);
  row.stress_lin_gap = g2 > 0.0 ? diff1 / std::sqrt(g2) : 0.0;

  if (limit != nullptr) {
    if (std::abs(limit->L - m.L) > 1e-12 * m.L) throw ConfigError("limit solution and strip differ in L");
    double th_err = 0.0;
    for (int c = 0; c < m.num_qp_columns(); ++c) {
      const double x = m.qp_column_x1(c);
      const double d = rot.angle_at(x) - limit->theta_at(x);
      th_err += wc * d * d;
    }
    row.theta_err_L2 = std::sqrt(th_err);
    const auto shapes = shapes_at_qps(m);
    double yerr = 0.0;
    for (int e = 0; e < m.num_elements(); ++e)
      for (int q = 0; q < 4; ++q) {
        const Vec2 p = m.qp_position(e, q);
        const Vec2 d0 = y.value_at_qp(e, q) - limit->ybar_at(p.x);
        const Mat2 a = y.displacement_gradient(e, q, shapes);
        const double th = limit->theta_at(p.x);
        const double half = std::sin(0.5 * th);
        const Vec2 d1{a.a11 + 2.0 * half * half, a.a21 - std::sin(th)};
        const Vec2 d2{y.h * a.a12, y.h * (1.0 + a.a22)};
        yerr += wq * (dot(d0, d0) + dot(d1, d1) + dot(d2, d2));
      }
    row.y_err_W12 = std::sqrt(yerr);
  }
  if (rotations_out) *rotations_out = rot;
  if (G_out) *G_out = G;
  if (E_out) *E_out = S;
  return row;
}

struct ConvergenceRow {
  double h = 0.0;
  DiagnosticRow diag;
};

/// Rows sorted by decreasing h.
template <StoredEnergy W>
std::vector<ConvergenceRow> convergence_study(const std::vector<DeformationField> &solutions,
                                              const ElasticaSolution &limit, const LoadProfile &g, const W &w) {
  std::vector<ConvergenceRow> rows;
  for (const auto &y : solutions) {
    if (std::abs(y.mesh.L - limit.L) > 1e-12 * limit.L) throw ConfigError("solutions and limit differ in L");
    rows.push_back({y.h, diagnose(y, g, w, &limit)});
  }
  std::sort(rows.begin(), rows.end(), [](const ConvergenceRow &a, const ConvergenceRow &b) { return a.h > b.h; });
  return rows;
}

}  // namespace thinbeam
