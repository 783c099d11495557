#pragma once

// Frame-indifferent stored-energy densities on 2x2 matrices, their first and
// second derivatives, the linearization at the identity and the effective
// beam modulus derived from it.

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <limits>
#include <string>
#include <utility>

#include "thinbeam/errors.hpp"
#include "thinbeam/mat2.hpp"

namespace thinbeam {

/// Fourth-order tensor on 2x2 matrices stored as a 4x4 array acting on the
/// flattened (a11, a12, a21, a22) representation.
struct Tangent4 {
  std::array<std::array<double, 4>, 4> c{};

  double operator()(int i, int j) const { return c[i][j]; }
  double &operator()(int i, int j) { return c[i][j]; }

  Mat2 apply(const Mat2 &h) const {
    const auto v = h.flat();
    std::array<double, 4> out{};
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) out[i] += c[i][j] * v[j];
    return Mat2::from_flat(out);
  }
};

namespace detail {

/// Invariants of F = Id + A used by the distance to SO(2), formed from A so
/// that states near the identity keep full relative accuracy:
///   rho = |(F11+F22, F21-F12)|,  rho - 2,  b = |(F11-F22, F12+F21)|.
struct PolarInvariants {
  double c, s, rho, rho_minus_2, b;
};

inline PolarInvariants polar_invariants(const Mat2 &a) {
  PolarInvariants p{};
  const double tr = a.a11 + a.a22;
  p.c = 2.0 + tr;
  p.s = a.a21 - a.a12;
  p.rho = std::hypot(p.c, p.s);
  p.rho_minus_2 = (tr * (4.0 + tr) + p.s * p.s) / (p.rho + 2.0);
  p.b = std::hypot(a.a11 - a.a22, a.a12 + a.a21);
  return p;
}

/// det(Id + A).
inline double det_offset(const Mat2 &a) { return 1.0 + trace(a) + det(a); }

}  // namespace detail

/// Singular values sigma1 >= sigma2 >= 0 of a 2x2 matrix. Their sum and
/// difference are the lengths of (F11+F22, F21-F12) and (F11-F22, F12+F21),
/// in the order given by the sign of det F.
inline std::array<double, 2> singular_values(const Mat2 &f) {
  double sum = std::hypot(f.a11 + f.a22, f.a21 - f.a12);
  double diff = std::hypot(f.a11 - f.a22, f.a12 + f.a21);
  if (det(f) < 0.0) std::swap(sum, diff);
  return {0.5 * (sum + diff), 0.5 * (sum - diff)};
}

/// Nearest rotation to F (rotation factor of the polar decomposition).
inline Rotation2 polar_rotation(const Mat2 &f) {
  const double d = det(f);
  if (!(d > 0.0)) throw DomainError("polar_rotation: det F = " + std::to_string(d) + " is not positive");
  return Rotation2(std::atan2(f.a21 - f.a12, f.a11 + f.a22));
}

/// Squared distance from Id + A to SO(2). With rho and b as in
/// detail::PolarInvariants the singular-value formulas for both signs of
/// det F reduce to ((rho - 2)^2 + b^2) / 2.
inline double dist_so2_sq_offset(const Mat2 &a) {
  const auto p = detail::polar_invariants(a);
  return 0.5 * (p.rho_minus_2 * p.rho_minus_2 + p.b * p.b);
}

/// Distance from F to SO(2) in the Frobenius norm.
inline double dist_so2(const Mat2 &f) { return std::sqrt(dist_so2_sq_offset(f - Mat2::identity())); }

/// Minimal interface of a stored-energy density usable by the solvers and the
/// hypothesis checks.
template <class W>
concept StoredEnergy = requires(const W &w, const Mat2 &f) {
  { w.energy(f) } -> std::convertible_to<double>;
  { w.stress(f) } -> std::convertible_to<Mat2>;
  { w.name() } -> std::convertible_to<std::string>;
};

/// Densities that can evaluate W and DW at Id + A directly from A.
template <class W>
concept HasOffsetForm = StoredEnergy<W> && requires(const W &w, const Mat2 &a) {
  { w.energy_offset(a) } -> std::convertible_to<double>;
  { w.stress_offset(a) } -> std::convertible_to<Mat2>;
};

template <class W>
concept HasAnalyticTangent = StoredEnergy<W> && requires(const W &w, const Mat2 &f) {
  { w.stress_derivative(f) } -> std::convertible_to<Tangent4>;
};

enum class EnergyKind { half_dist_squared, isotropic_quadratic };

/// The built-in densities:
///   half-dist-squared      W(F) = 1/2 dist^2(F, SO(2))
///   isotropic-quadratic    W(F) = mu |E|^2 + lambda/2 (tr E)^2,  E = (F^T F - Id)/2
/// The second one vanishes on reflections as well, so it only bounds
/// dist^2(F, SO(2)) from below for det F > 0.
class EnergyDensity {
 public:
  static EnergyDensity half_dist_squared() { return EnergyDensity(EnergyKind::half_dist_squared, 0.5, 0.0); }

  static EnergyDensity isotropic_quadratic(double mu, double lambda) {
    if (!(mu > 0.0) || !(lambda >= 0.0) || !std::isfinite(mu) || !std::isfinite(lambda))
      throw ConfigError("isotropic-quadratic requires mu > 0 and lambda >= 0 (energy.mu, energy.lambda)");
    return EnergyDensity(EnergyKind::isotropic_quadratic, mu, lambda);
  }

  EnergyKind kind() const { return kind_; }
  double mu() const { return mu_; }
  double lambda() const { return lambda_; }

  std::string name() const {
    return kind_ == EnergyKind::half_dist_squared ? "half-dist-squared" : "isotropic-quadratic";
  }

  double energy(const Mat2 &f) const { return energy_offset(f - Mat2::identity()); }

  /// DW(F). For half-dist-squared this is F - pi(F) and requires det F > 0.
  Mat2 stress(const Mat2 &f) const { return stress_offset(f - Mat2::identity()); }

  /// W(Id + A), accurate for small A.
  double energy_offset(const Mat2 &a) const {
    if (kind_ == EnergyKind::half_dist_squared) return 0.5 * dist_so2_sq_offset(a);
    const Mat2 e = green_strain_offset(a);
    const double tr = trace(e);
    return mu_ * norm_sq(e) + 0.5 * lambda_ * tr * tr;
  }

  /// DW(Id + A), accurate for small A.
  Mat2 stress_offset(const Mat2 &a) const {
    if (kind_ == EnergyKind::half_dist_squared) {
      const double d = detail::det_offset(a);
      if (!(d > 0.0)) throw DomainError("half-dist-squared stress: det F = " + std::to_string(d) + " <= 0");
      // A - (R - Id), R the rotation by atan2(s, c)
      const auto p = detail::polar_invariants(a);
      const double sn = p.s / p.rho;
      const double cm1 = p.c > 0.0 ? -p.s * p.s / (p.rho * (p.c + p.rho)) : p.c / p.rho - 1.0;
      return {a.a11 - cm1, a.a12 + sn, a.a21 - sn, a.a22 - cm1};
    }
    const Mat2 s = 2.0 * mu_ * green_strain_offset(a);
    const Mat2 pk = s + lambda_ * trace(green_strain_offset(a)) * Mat2::identity();
    return pk + a * pk;
  }

  /// D^2 W(F) as a symmetric 4x4 array in the flattened basis.
  Tangent4 stress_derivative(const Mat2 &f) const {
    Tangent4 t;
    if (kind_ == EnergyKind::half_dist_squared) {
      const double c = f.a11 + f.a22, s = f.a21 - f.a12;
      const double rho = std::hypot(c, s);
      if (!(det(f) > 0.0) || rho == 0.0)
        throw DomainError("half-dist-squared tangent: det F = " + std::to_string(det(f)) + " <= 0");
      const double sn = s / rho, cs = c / rho;
      const std::array<double, 4> v{-sn, -cs, cs, -sn};
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) t(i, j) = (i == j ? 1.0 : 0.0) - v[i] * v[j] / rho;
      return t;
    }
    const Mat2 s = pk2(f);
    for (int j = 0; j < 4; ++j) {
      std::array<double, 4> unit{};
      unit[j] = 1.0;
      const Mat2 h = Mat2::from_flat(unit);
      const Mat2 de = sym(transpose(f) * h);
      const Mat2 ds = 2.0 * mu_ * de + lambda_ * trace(de) * Mat2::identity();
      const auto col = (h * s + f * ds).flat();
      for (int i = 0; i < 4; ++i) t(i, j) = col[i];
    }
    return t;
  }

 private:
  EnergyDensity(EnergyKind kind, double mu, double lambda) : kind_(kind), mu_(mu), lambda_(lambda) {}

  static Mat2 green_strain(const Mat2 &f) { return green_strain_offset(f - Mat2::identity()); }
  static Mat2 green_strain_offset(const Mat2 &a) { return 0.5 * (a + transpose(a) + transpose(a) * a); }

  Mat2 pk2(const Mat2 &f) const {
    const Mat2 e = green_strain(f);
    return 2.0 * mu_ * e + lambda_ * trace(e) * Mat2::identity();
  }

  EnergyKind kind_;
  double mu_;
  double lambda_;
};

/// W(Id + A) and DW(Id + A), through the offset form when the density has one.
template <StoredEnergy W>
double energy_near_identity(const W &w, const Mat2 &a) {
  if constexpr (HasOffsetForm<W>) return w.energy_offset(a);
  else return w.energy(Mat2::identity() + a);
}

template <StoredEnergy W>
Mat2 stress_near_identity(const W &w, const Mat2 &a) {
  if constexpr (HasOffsetForm<W>) return w.stress_offset(a);
  else return w.stress(Mat2::identity() + a);
}

/// D^2 W(F): analytic where the density provides it, otherwise central
/// differences of DW.
template <StoredEnergy W>
Tangent4 tangent_of(const W &w, const Mat2 &f) {
  if constexpr (HasAnalyticTangent<W>) {
    return w.stress_derivative(f);
  } else {
    constexpr double step = 1e-6;
    Tangent4 t;
    const auto base = f.flat();
    for (int j = 0; j < 4; ++j) {
      auto plus = base, minus = base;
      plus[j] += step;
      minus[j] -= step;
      const auto dp = w.stress(Mat2::from_flat(plus)).flat();
      const auto dm = w.stress(Mat2::from_flat(minus)).flat();
      for (int i = 0; i < 4; ++i) t(i, j) = (dp[i] - dm[i]) / (2.0 * step);
    }
    return t;
  }
}

/// Orthonormal basis {e1⊗e1, e2⊗e2, (e1⊗e2+e2⊗e1)/√2, (e1⊗e2-e2⊗e1)/√2}.
inline std::array<Mat2, 4> linearization_basis() {
  const double r = 1.0 / std::sqrt(2.0);
  return {Mat2{1.0, 0.0, 0.0, 0.0}, Mat2{0.0, 0.0, 0.0, 1.0}, Mat2{0.0, r, r, 0.0}, Mat2{0.0, r, -r, 0.0}};
}

/// L = D^2 W(Id) together with the beam modulus E defined by
/// 1/E = L^{-1}(e1⊗e1) : (e1⊗e1) on symmetric matrices.
struct Linearization {
  Tangent4 flat;                                 // in the flattened basis
  std::array<std::array<double, 4>, 4> basis{};  // in linearization_basis()
  double modulus = 0.0;

  Mat2 apply(const Mat2 &g) const { return flat.apply(g); }
};

template <StoredEnergy W>
Linearization linearize(const W &w) {
  Linearization lin;
  lin.flat = tangent_of(w, Mat2::identity());
  const auto b = linearization_basis();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) lin.basis[i][j] = ddot(b[i], lin.flat.apply(b[j]));

  // Solve the symmetric 3x3 block for S with L S = e1⊗e1 (Gaussian elimination
  // with partial pivoting); the e1⊗e1 coordinate of S is 1/E.
  std::array<std::array<double, 4>, 3> m{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) m[i][j] = lin.basis[i][j];
    m[i][3] = i == 0 ? 1.0 : 0.0;
  }
  double scale = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) scale = std::max(scale, std::abs(m[i][j]));
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    if (!(std::abs(m[piv][col]) > 1e-12 * scale))
      throw ConfigError("linearization of " + w.name() + " is singular on symmetric matrices");
    std::swap(m[piv], m[col]);
    for (int r = 0; r < 3; ++r) {
      if (r == col) continue;
      const double factor = m[r][col] / m[col][col];
      for (int c = col; c < 4; ++c) m[r][c] -= factor * m[col][c];
    }
  }
  const double compliance = m[0][3] / m[0][0];
  if (!(compliance > 0.0)) throw ConfigError("linearization of " + w.name() + " yields a non-positive modulus");
  lin.modulus = 1.0 / compliance;
  return lin;
}

/// eta(A) = DW(Id + A) - L A, the remainder of the first-order expansion of DW at Id.
template <StoredEnergy W>
Mat2 taylor_remainder(const W &w, const Linearization &lin, const Mat2 &a) {
  return stress_near_identity(w, a) - lin.apply(a);
}

template <StoredEnergy W>
Mat2 taylor_remainder(const W &w, const Mat2 &a) {
  return taylor_remainder(w, linearize(w), a);
}

}  // namespace thinbeam
