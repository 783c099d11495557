#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "thinbeam/elastica.hpp"

using namespace thinbeam;

namespace {

// Linearized cantilever: E theta'' = 12 gamma (L - x), theta(0) = 0, theta'(L) = 0.
double linear_theta(double x, double gamma, double E, double L) {
  return (12.0 * gamma / E) * (L * x * x / 2.0 - x * x * x / 6.0 - L * L * x / 2.0);
}

double sup_diff_at_common_nodes(const ElasticaSolution &coarse, const ElasticaSolution &fine) {
  double d = 0.0;
  for (int k = 0; k <= coarse.n(); ++k) d = std::max(d, std::abs(coarse.theta[k] - fine.theta[2 * k]));
  return d;
}

}  // namespace

TEST(LinearOracle, ClosedFormBoundaryValues) {
  const double gamma = 1e-3, E = 1.0, L = 1.0, t = 1e-6;
  EXPECT_EQ(linear_theta(0.0, gamma, E, L), 0.0);
  EXPECT_NEAR(linear_theta(L, gamma, E, L), -2.0 * gamma * L * L * L / E, 1e-15);
  EXPECT_NEAR((linear_theta(L + t, gamma, E, L) - linear_theta(L - t, gamma, E, L)) / (2 * t), 0.0, 1e-9);
}

TEST(Gtilde, ZeroAndConstantLoads) {
  const TiltedLoad z = gtilde(LoadProfile::constant({0, 0}), 1.0, 64);
  for (const Vec2 &v : z.value) EXPECT_EQ(norm(v), 0.0);
  const double gamma = 1e-3, L = 1.3;
  const TiltedLoad t = gtilde(LoadProfile::constant({0, -gamma}), L, 64);
  for (std::size_t k = 0; k < t.x.size(); ++k) {
    EXPECT_NEAR(t.value[k].x, 0.0, 1e-15);
    EXPECT_NEAR(t.value[k].y, gamma * (L - t.x[k]), 1e-12);
  }
}

TEST(Gtilde, RichardsonForSmoothLoad) {
  // g(x) sampled densely from a smooth profile
  std::vector<double> xs;
  std::vector<Vec2> gs;
  for (int k = 0; k <= 2000; ++k) {
    const double x = k / 2000.0;
    xs.push_back(x);
    gs.push_back({0.2 * std::cos(3 * x), -std::sin(2 * x) - 0.5});
  }
  const LoadProfile g = LoadProfile::samples(xs, gs);
  double prev = 0.0;
  for (int n : {16, 32, 64}) {
    const TiltedLoad a = gtilde(g, 1.0, n), b = gtilde(g, 1.0, 2 * n);
    double d = 0.0;
    for (int k = 0; k <= n; ++k) d = std::max(d, norm(a.value[k] - b.value[2 * k]));
    EXPECT_LE(d * n * n, 1.0);
    if (prev > 0.0) EXPECT_NEAR(prev / d, 4.0, 0.5);
    prev = d;
  }
}

TEST(SolveElastica, ZeroLoad) {
  const ElasticaSolution s = solve_elastica(1.0, LoadProfile::constant({0, 0}), 1.0, 64);
  for (double t : s.theta) EXPECT_EQ(t, 0.0);
  EXPECT_EQ(s.J2, 0.0);
  EXPECT_TRUE(s.converged);
}

TEST(SolveElastica, LinearizedCantileverTip) {
  const double gamma = 1e-3, E = 1.0, L = 1.0;
  const ElasticaSolution s = solve_elastica(E, LoadProfile::constant({0, -gamma}), L, 256);
  ASSERT_TRUE(s.converged);
  EXPECT_NEAR(s.theta.back(), -2.0 * gamma * L * L * L / E, 0.005 * 2e-3);
  for (std::size_t k = 0; k < s.x.size(); ++k)
    EXPECT_NEAR(s.theta[k], linear_theta(s.x[k], gamma, E, L), 0.005 * 2e-3);
}

TEST(SolveElastica, SecondOrderInN) {
  const LoadProfile g = LoadProfile::constant({0, -0.5});
  const ElasticaSolution a = solve_elastica(1.0, g, 1.0, 64), b = solve_elastica(1.0, g, 1.0, 128),
                         c = solve_elastica(1.0, g, 1.0, 256);
  const double d1 = sup_diff_at_common_nodes(a, b), d2 = sup_diff_at_common_nodes(b, c);
  EXPECT_GT(d1, 0.0);
  EXPECT_NEAR(d1 / d2, 4.0, 0.4);
}

TEST(SolveElastica, ValidatesInput) {
  const LoadProfile g = LoadProfile::constant({0, -1e-3});
  EXPECT_THROW(solve_elastica(0.0, g, 1.0, 64), ConfigError);
  EXPECT_THROW(solve_elastica(1.0, g, -1.0, 64), ConfigError);
  EXPECT_THROW(solve_elastica(1.0, g, 1.0, 1), ConfigError);
}

TEST(ReconstructMidline, ConstantAngles) {
  const ElasticaSolution zero = make_elastica(1.0, 2.0, std::vector<double>(33, 0.0));
  for (std::size_t k = 0; k < zero.x.size(); ++k) {
    EXPECT_NEAR(zero.ybar[k].x, zero.x[k], 1e-15);
    EXPECT_EQ(zero.ybar[k].y, 0.0);
  }
  const double a = 0.4;
  const ElasticaSolution tilt = make_elastica(1.0, 2.0, std::vector<double>(33, a));
  for (std::size_t k = 0; k < tilt.x.size(); ++k) {
    EXPECT_NEAR(tilt.ybar[k].x, tilt.x[k] * std::cos(a), 1e-14);
    EXPECT_NEAR(tilt.ybar[k].y, tilt.x[k] * std::sin(a), 1e-14);
  }
}

TEST(ReconstructMidline, UnitSpeedBound) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> th(65);
    th[0] = 0.0;
    for (std::size_t k = 1; k < th.size(); ++k) th[k] = th[k - 1] + 0.2 * u(rng);
    const ElasticaSolution s = make_elastica(1.0, 1.5, th);
    EXPECT_LE(norm(s.ybar.back()), 1.5 + 1e-14);
  }
}

TEST(J2, TrivialValues) {
  const ElasticaSolution zero = make_elastica(1.0, 1.0, std::vector<double>(65, 0.0));
  EXPECT_EQ(J2_eval(zero, LoadProfile::constant({0, 0}), 1.0), 0.0);
  EXPECT_NEAR(J2_eval(zero, LoadProfile::constant({0, -1e-3}), 1.0), 0.0, 1e-18);
}

TEST(J2, SolutionIsLocalMinimum) {
  const double gamma = 1e-3;
  const LoadProfile g = LoadProfile::constant({0, -gamma});
  const ElasticaSolution s = solve_elastica(1.0, g, 1.0, 256);
  const double j0 = J2_eval(s, g, 1.0);
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    const double a1 = u(rng), a2 = u(rng), f1 = 0.5 + 2.0 * std::abs(u(rng));
    std::vector<double> th = s.theta;
    double amp = 0.0;
    std::vector<double> d(th.size());
    for (std::size_t i = 0; i < th.size(); ++i) {
      const double x = s.x[i];
      d[i] = a1 * std::sin(f1 * x) + a2 * x * x;  // vanishes at 0
      amp = std::max(amp, std::abs(d[i]));
    }
    for (std::size_t i = 0; i < th.size(); ++i) th[i] += 1e-2 * u(rng) * d[i] / amp;
    const ElasticaSolution p = make_elastica(1.0, 1.0, th);
    EXPECT_GE(J2_eval(p, g, 1.0), j0) << k;
  }
}

TEST(MinimizeJ2, ZeroLoad) {
  const ElasticaSolution s = minimize_J2(1.0, LoadProfile::constant({0, 0}), 1.0, 64);
  for (double t : s.theta) EXPECT_EQ(t, 0.0);
}

TEST(MinimizeJ2, AgreesWithShooting) {
  const LoadProfile g = LoadProfile::constant({0, -1e-3});
  const ElasticaSolution a = solve_elastica(1.0, g, 1.0, 256), b = minimize_J2(1.0, g, 1.0, 256);
  ASSERT_TRUE(b.converged);
  double d = 0.0;
  for (std::size_t k = 0; k < a.theta.size(); ++k) d = std::max(d, std::abs(a.theta[k] - b.theta[k]));
  EXPECT_LE(d, 1e-6);
}

TEST(DiscreteJ2, GradientMatchesFiniteDifferences) {
  const DiscreteJ2 j(1.0, LoadProfile::constant({0.2, -0.7}), 1.0, 64);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  std::vector<double> th(65, 0.0);
  for (std::size_t k = 1; k < th.size(); ++k) th[k] = u(rng);
  const std::vector<double> grad = j.gradient(th);
  for (std::size_t k = 1; k < th.size(); ++k) {
    const double t = 1e-6;
    std::vector<double> p = th, m = th;
    p[k] += t;
    m[k] -= t;
    const double fd = (j.value(p) - j.value(m)) / (2 * t);
    EXPECT_NEAR(grad[k], fd, 1e-6 * std::max(std::abs(fd), 1e-3)) << k;
  }
}
