#pragma once

// Planar vector and 2x2 matrix algebra used for deformation gradients,
// rotations, scaled strains and stresses.

#include <array>
#include <cmath>
#include <numbers>

namespace thinbeam {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 &operator+=(const Vec2 &o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr Vec2 &operator-=(const Vec2 &o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  constexpr Vec2 &operator*=(double s) {
    x *= s;
    y *= s;
    return *this;
  }
  constexpr double operator[](int i) const { return i == 0 ? x : y; }
  constexpr double &operator[](int i) { return i == 0 ? x : y; }
};

constexpr Vec2 operator+(Vec2 a, const Vec2 &b) { return a += b; }
constexpr Vec2 operator-(Vec2 a, const Vec2 &b) { return a -= b; }
constexpr Vec2 operator-(const Vec2 &a) { return {-a.x, -a.y}; }
constexpr Vec2 operator*(double s, Vec2 a) { return a *= s; }
constexpr Vec2 operator*(Vec2 a, double s) { return a *= s; }
constexpr double dot(const Vec2 &a, const Vec2 &b) { return a.x * b.x + a.y * b.y; }
inline double norm(const Vec2 &a) { return std::hypot(a.x, a.y); }

/// Row-major 2x2 real matrix. Column b of a deformation gradient holds the
/// derivative in direction e_b.
struct Mat2 {
  double a11 = 0.0, a12 = 0.0, a21 = 0.0, a22 = 0.0;

  static constexpr Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
  static constexpr Mat2 zero() { return {}; }
  static constexpr Mat2 diag(double d1, double d2) { return {d1, 0.0, 0.0, d2}; }
  static constexpr Mat2 from_columns(const Vec2 &c1, const Vec2 &c2) { return {c1.x, c2.x, c1.y, c2.y}; }
  /// a ⊗ b
  static constexpr Mat2 outer(const Vec2 &a, const Vec2 &b) { return {a.x * b.x, a.x * b.y, a.y * b.x, a.y * b.y}; }

  constexpr double operator()(int i, int j) const {
    return i == 0 ? (j == 0 ? a11 : a12) : (j == 0 ? a21 : a22);
  }
  constexpr double &operator()(int i, int j) {
    return i == 0 ? (j == 0 ? a11 : a12) : (j == 0 ? a21 : a22);
  }

  /// Flattened (a11, a12, a21, a22).
  constexpr std::array<double, 4> flat() const { return {a11, a12, a21, a22}; }
  static constexpr Mat2 from_flat(const std::array<double, 4> &v) { return {v[0], v[1], v[2], v[3]}; }

  constexpr Vec2 col(int j) const { return j == 0 ? Vec2{a11, a21} : Vec2{a12, a22}; }

  constexpr Mat2 &operator+=(const Mat2 &o) {
    a11 += o.a11;
    a12 += o.a12;
    a21 += o.a21;
    a22 += o.a22;
    return *this;
  }
  constexpr Mat2 &operator-=(const Mat2 &o) {
    a11 -= o.a11;
    a12 -= o.a12;
    a21 -= o.a21;
    a22 -= o.a22;
    return *this;
  }
  constexpr Mat2 &operator*=(double s) {
    a11 *= s;
    a12 *= s;
    a21 *= s;
    a22 *= s;
    return *this;
  }
};

constexpr Mat2 operator+(Mat2 a, const Mat2 &b) { return a += b; }
constexpr Mat2 operator-(Mat2 a, const Mat2 &b) { return a -= b; }
constexpr Mat2 operator-(const Mat2 &a) { return {-a.a11, -a.a12, -a.a21, -a.a22}; }
constexpr Mat2 operator*(double s, Mat2 a) { return a *= s; }
constexpr Mat2 operator*(Mat2 a, double s) { return a *= s; }

constexpr Mat2 operator*(const Mat2 &a, const Mat2 &b) {
  return {a.a11 * b.a11 + a.a12 * b.a21, a.a11 * b.a12 + a.a12 * b.a22,
          a.a21 * b.a11 + a.a22 * b.a21, a.a21 * b.a12 + a.a22 * b.a22};
}
constexpr Vec2 operator*(const Mat2 &a, const Vec2 &v) {
  return {a.a11 * v.x + a.a12 * v.y, a.a21 * v.x + a.a22 * v.y};
}

constexpr Mat2 transpose(const Mat2 &a) { return {a.a11, a.a21, a.a12, a.a22}; }
constexpr double det(const Mat2 &a) { return a.a11 * a.a22 - a.a12 * a.a21; }
constexpr double trace(const Mat2 &a) { return a.a11 + a.a22; }
/// Frobenius inner product A:B.
constexpr double ddot(const Mat2 &a, const Mat2 &b) {
  return a.a11 * b.a11 + a.a12 * b.a12 + a.a21 * b.a21 + a.a22 * b.a22;
}
constexpr double norm_sq(const Mat2 &a) { return ddot(a, a); }
inline double norm(const Mat2 &a) { return std::sqrt(norm_sq(a)); }
constexpr Mat2 sym(const Mat2 &a) {
  const double off = 0.5 * (a.a12 + a.a21);
  return {a.a11, off, off, a.a22};
}
constexpr Mat2 skew(const Mat2 &a) {
  const double off = 0.5 * (a.a12 - a.a21);
  return {0.0, off, -off, 0.0};
}

inline bool is_finite(const Mat2 &a) {
  return std::isfinite(a.a11) && std::isfinite(a.a12) && std::isfinite(a.a21) && std::isfinite(a.a22);
}

/// Maps an angle to its representative in (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::remainder(a, two_pi);
  if (r <= -std::numbers::pi) r += two_pi;
  return r;
}

/// Planar rotation, stored by its angle.
class Rotation2 {
 public:
  constexpr Rotation2() = default;
  explicit Rotation2(double angle) : angle_(wrap_angle(angle)) {}

  double angle() const { return angle_; }
  Mat2 matrix() const {
    const double c = std::cos(angle_), s = std::sin(angle_);
    return {c, -s, s, c};
  }
  /// R - Id without cancellation for small angles.
  Mat2 minus_identity() const {
    const double half = std::sin(0.5 * angle_);
    const double s = std::sin(angle_);
    return {-2.0 * half * half, -s, s, -2.0 * half * half};
  }

 private:
  double angle_ = 0.0;
};

inline Mat2 rotation_matrix(double angle) { return Rotation2(angle).matrix(); }

}  // namespace thinbeam
