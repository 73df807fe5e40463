#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "feinn/problems.hpp"

using namespace feinn;

namespace
{

/// Five-point Laplacian of a scalar field with step h.
double fd_laplacian(const ScalarField &u, const Point &p, double h)
{
  return (u(p + Point(h, 0)) + u(p - Point(h, 0)) + u(p + Point(0, h)) + u(p - Point(0, h)) - 4 * u(p)) /
         (h * h);
}

}  // namespace

TEST(Problems, ArcValues)
{
  const auto p = arc_wavefront();
  EXPECT_EQ(p.coarse->size(), 1);
  EXPECT_EQ(p.initial_mesh()->num_leaves(), 64);
  for (double phi : {0.1, 0.7, 1.3})
  {
    EXPECT_NEAR(p.u(Point(0.95 * std::cos(phi) - 0.05, 0.95 * std::sin(phi) - 0.05)), std::atan(25.0), 1e-12);
    EXPECT_NEAR(p.u(Point(0.7 * std::cos(phi) - 0.05, 0.7 * std::sin(phi) - 0.05)), 0.0, 1e-12);
  }
  EXPECT_NO_THROW(verify_problem(p));
}

TEST(Problems, ArcSourceMatchesFiniteDifferences)
{
  const auto p = arc_wavefront();
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int i = 0; i < 20; ++i)
  {
    const Point x(u(rng), u(rng));
    const double fd = -fd_laplacian(p.u, x, 1e-4);
    EXPECT_NEAR(p.f(x), fd, 1e-3 * std::max(1.0, std::abs(fd)));
    const double h = 1e-6;
    const Point g = p.grad_u(x);
    EXPECT_NEAR(g.x(), (p.u(x + Point(h, 0)) - p.u(x - Point(h, 0))) / (2 * h), 1e-5 * std::max(1.0, g.norm()));
    EXPECT_NEAR(g.y(), (p.u(x + Point(0, h)) - p.u(x - Point(0, h))) / (2 * h), 1e-5 * std::max(1.0, g.norm()));
  }
}

TEST(Problems, FicheraHarmonic)
{
  const auto p = fichera_lshape();
  EXPECT_EQ(p.coarse->size(), 3);
  EXPECT_EQ(p.initial_mesh()->num_leaves(), 768);
  EXPECT_NEAR(p.u(Point(1, 0)), std::sin(std::numbers::pi / 3), 1e-15);
  EXPECT_EQ(p.u(Point(0, 0)), 0.0);
  EXPECT_LE(verify_problem(p), 1e-8);
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 100;)
  {
    const Point x(u(rng), u(rng));
    if (x.x() < 0.05 && x.y() < 0.05)
      continue;
    ++i;
    EXPECT_EQ(p.f(x), 0.0);
    const double h = 1e-6;
    const Point g = p.grad_u(x);
    EXPECT_NEAR(g.x(), (p.u(x + Point(h, 0)) - p.u(x - Point(h, 0))) / (2 * h), 1e-6 * std::max(1.0, g.norm()));
    EXPECT_NEAR(g.y(), (p.u(x + Point(0, h)) - p.u(x - Point(0, h))) / (2 * h), 1e-6 * std::max(1.0, g.norm()));
  }
}

TEST(Problems, FicheraGradientSingularity)
{
  const auto p = fichera_lshape();
  // |grad u| = (2/3) r^{-1/3} along any ray.
  std::vector<double> r, g;
  for (double s = 1e-1; s > 1e-7; s /= 10)
  {
    r.push_back(s);
    g.push_back(p.grad_u(Point(s * std::cos(0.4), s * std::sin(0.4))).norm());
  }
  for (std::size_t i = 0; i < r.size(); ++i)
    EXPECT_NEAR(g[i], 2.0 / 3 * std::pow(r[i], -1.0 / 3), 1e-12 * g[i]);
  const double slope = std::log(g.back() / g.front()) / std::log(r.back() / r.front());
  EXPECT_NEAR(slope, -1.0 / 3, 1e-12);
}

TEST(Problems, PolynomialsAndRegistry)
{
  for (int k = 1; k <= 4; ++k)
  {
    EXPECT_NO_THROW(verify_problem(poly_smoke(k)));
    EXPECT_NO_THROW(verify_problem(poly_sine(k)));
  }
  EXPECT_EQ(poly_smoke(3).u(Point(2, 3)), 8.0 + 27.0 + 4.0 * 9.0);
  for (const auto &name : problem_names())
    EXPECT_EQ(problem_by_name(name).name, name);
  EXPECT_THROW(problem_by_name("nope"), InvalidInput);
}

TEST(Problems, VerifyRejectsInconsistentSource)
{
  auto p = poly_smoke(2);
  p.f = [](const Point &) { return 1.0; };
  EXPECT_THROW(verify_problem(p), Error);
}

TEST(TanhEmulation, SymmetryAndPeak)
{
  for (double m : {1.0, 5.0, 10.0, 40.0})
  {
    const auto f = tanh_hat_emulation(m);
    for (double x : {0.1, 0.3, 0.6, 0.9})
      EXPECT_NEAR(f(x), f(-x), 1e-15);
  }
  double prev = 0;
  for (double m : {1.0, 2.0, 4.0, 8.0})
  {
    const double v = tanh_hat_emulation(m)(0.0);
    EXPECT_GT(v, prev);
    prev = v;
  }
  EXPECT_NEAR(tanh_hat_emulation(20)(0.0), 1.0, 1e-15);
  // The interval is mapped onto [-1, 1].
  EXPECT_EQ(tanh_hat_emulation(7, {0, 2})(1.0), tanh_hat_emulation(7)(0.0));
  EXPECT_THROW(tanh_hat_emulation(0), InvalidInput);
}

TEST(TanhEmulation, ConvergesToPlateauIndicator)
{
  // The pointwise limit as m grows is the indicator of (-1/4, 1/4).
  const auto f = tanh_hat_emulation(400);
  for (double x : {-0.2, 0.0, 0.1, 0.24})
    EXPECT_NEAR(f(x), 1.0, 1e-6);
  for (double x : {-0.9, -0.3, 0.3, 0.5})
    EXPECT_NEAR(f(x), 0.0, 1e-6);
}
