#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "thinbeam/errors.hpp"
#include "thinbeam/mat2.hpp"

namespace thinbeam {

/// Force density per unit length g(x1): either constant or sampled with
/// linear interpolation between samples.
class LoadProfile {
 public:
  LoadProfile() = default;

  static LoadProfile constant(Vec2 g) {
    if (!std::isfinite(g.x) || !std::isfinite(g.y)) throw ConfigError("load: non-finite constant value");
    LoadProfile p;
    p.x_ = {0.0};
    p.g_ = {g};
    return p;
  }

  static LoadProfile samples(std::vector<double> x, std::vector<Vec2> g) {
    if (x.size() != g.size() || x.size() < 2) throw ConfigError("load: sampled profile needs >= 2 matching samples");
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!std::isfinite(x[i]) || !std::isfinite(g[i].x) || !std::isfinite(g[i].y))
        throw ConfigError("load: non-finite sample");
      if (i > 0 && !(x[i] > x[i - 1])) throw ConfigError("load: sample abscissae must be strictly increasing");
    }
    LoadProfile p;
    p.x_ = std::move(x);
    p.g_ = std::move(g);
    return p;
  }

  bool is_constant() const { return x_.size() == 1; }

  bool is_zero() const {
    return std::all_of(g_.begin(), g_.end(), [](const Vec2 &v) { return v.x == 0.0 && v.y == 0.0; });
  }

  /// Sampled profiles must cover [0, L].
  bool covers(double length) const { return is_constant() || (x_.front() <= 0.0 && x_.back() >= length); }

  Vec2 at(double x1) const {
    if (is_constant()) return g_.front();
    if (x1 <= x_.front()) return g_.front();
    if (x1 >= x_.back()) return g_.back();
    const auto it = std::upper_bound(x_.begin(), x_.end(), x1);
    const std::size_t k = static_cast<std::size_t>(it - x_.begin());
    const double t = (x1 - x_[k - 1]) / (x_[k] - x_[k - 1]);
    return (1.0 - t) * g_[k - 1] + t * g_[k];
  }

  /// Exact \int_a^b g for the piecewise-linear profile (constant beyond the samples).
  Vec2 integral(double a, double b) const {
    if (b < a) return -integral(b, a);
    if (is_constant()) return (b - a) * g_.front();
    std::vector<double> cuts{a};
    for (double x : x_)
      if (x > a && x < b) cuts.push_back(x);
    cuts.push_back(b);
    Vec2 s;
    for (std::size_t i = 1; i < cuts.size(); ++i)
      s += 0.5 * (cuts[i] - cuts[i - 1]) * (at(cuts[i - 1]) + at(cuts[i]));
    return s;
  }

  LoadProfile scaled(double factor) const {
    LoadProfile p = *this;
    for (auto &v : p.g_) v *= factor;
    return p;
  }

  const std::vector<double> &abscissae() const { return x_; }
  const std::vector<Vec2> &values() const { return g_; }

 private:
  std::vector<double> x_{0.0};
  std::vector<Vec2> g_{Vec2{}};
};

inline bool operator==(const LoadProfile &a, const LoadProfile &b) {
  if (a.abscissae() != b.abscissae() || a.values().size() != b.values().size()) return false;
  for (std::size_t i = 0; i < a.values().size(); ++i)
    if (a.values()[i].x != b.values()[i].x || a.values()[i].y != b.values()[i].y) return false;
  return true;
}

}  // namespace thinbeam
