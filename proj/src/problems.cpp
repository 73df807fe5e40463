#include "feinn/problems.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace feinn
{

namespace
{

constexpr double kPi = std::numbers::pi;

std::vector<int> default_arch()
{
  return {2, 50, 50, 50, 50, 1};
}

/// Fills value, gradient and source from the jet of u.
void from_jet(Problem &p)
{
  auto uj = p.u_jet;
  p.u = [uj](const Point &x) { return uj(Jet::x(x.x()), Jet::y(x.y())).v; };
  p.grad_u = [uj](const Point &x) {
    const Jet j = uj(Jet::x(x.x()), Jet::y(x.y()));
    return Point(j.dx, j.dy);
  };
  p.f = [uj](const Point &x) { return -uj(Jet::x(x.x()), Jet::y(x.y())).laplacian(); };
}

Jet ipow(const Jet &a, int n)
{
  Jet r(1.0);
  for (int i = 0; i < n; ++i)
    r = r * a;
  return r;
}

}  // namespace

std::shared_ptr<const ForestMesh> Problem::initial_mesh(int levels) const
{
  return std::make_shared<const ForestMesh>(refine_uniform(new_forest(coarse), levels));
}

Problem arc_wavefront()
{
  Problem p;
  p.name = "arc_wavefront";
  p.coarse = std::make_shared<const CoarseMesh>(CoarseMesh::unit_square());
  p.initial_refinement = 3;
  p.u_jet = [](const Jet &x, const Jet &y) {
    const Jet dx = x + 0.05, dy = y + 0.05;
    return atan(100.0 * (sqrt(dx * dx + dy * dy) - 0.7));
  };
  from_jet(p);
  p.arch = default_arch();
  p.schedule = {{5000, 10000}, {500, 1000, 1500}};
  return p;
}

Problem fichera_lshape()
{
  Problem p;
  p.name = "fichera_lshape";
  p.coarse = std::make_shared<const CoarseMesh>(CoarseMesh::l_shape());
  p.initial_refinement = 4;
  // theta = atan2(y, x), shifted by 2 pi below -pi/2 so that theta + pi/2 is
  // in [0, 3 pi/2] on the domain and u vanishes on both reentrant edges.
  p.u_jet = [](const Jet &x, const Jet &y) {
    Jet theta = atan2(y, x);
    if (theta.v < -kPi / 2)
      theta.v += 2 * kPi;
    const Jet r = sqrt(x * x + y * y);
    return pow(r, 2.0 / 3.0) * sin((2.0 / 3.0) * (theta + kPi / 2));
  };
  p.u = [](const Point &x) {
    const double r = x.norm();
    if (r == 0.0)
      return 0.0;
    double theta = std::atan2(x.y(), x.x());
    if (theta < -kPi / 2)
      theta += 2 * kPi;
    return std::pow(r, 2.0 / 3.0) * std::sin(2.0 / 3.0 * (theta + kPi / 2));
  };
  p.grad_u = [](const Point &x) {
    const double r = x.norm();
    if (r == 0.0)
      return Point(0.0, 0.0);
    double theta = std::atan2(x.y(), x.x());
    if (theta < -kPi / 2)
      theta += 2 * kPi;
    const double a = 2.0 / 3.0;
    const double phi = theta + kPi / 2;
    const double scale = a * std::pow(r, a - 1.0);
    const double ur = scale * std::sin(a * phi);   // du/dr
    const double ut = scale * std::cos(a * phi);   // (1/r) du/dtheta
    const double c = std::cos(theta), s = std::sin(theta);
    return Point(ur * c - ut * s, ur * s + ut * c);
  };
  p.f = [](const Point &) { return 0.0; };
  p.arch = default_arch();
  p.schedule = {{10000, 20000}, {3000, 4000, 5000}};
  return p;
}

Problem poly_smoke(int k)
{
  if (k < 1)
    throw InvalidInput("poly_smoke: degree must be at least 1");
  Problem p;
  p.name = "poly_smoke";
  p.coarse = std::make_shared<const CoarseMesh>(CoarseMesh::unit_square());
  p.initial_refinement = 2;
  p.u_jet = [k](const Jet &x, const Jet &y) {
    Jet u = ipow(x, k) + ipow(y, k);
    if (k >= 3)
      u = u + ipow(x, k - 1) * ipow(y, k - 1);
    return u;
  };
  from_jet(p);
  p.arch = default_arch();
  p.schedule = {{5000, 10000}, {500, 1000, 1500}};
  return p;
}

Problem poly_sine(int k)
{
  Problem p = poly_smoke(k);
  p.name = "poly_sine";
  auto base = p.u_jet;
  p.u_jet = [base](const Jet &x, const Jet &y) { return base(x, y) + sin(kPi * x) * sin(kPi * y); };
  from_jet(p);
  return p;
}

Problem problem_by_name(const std::string &name, int k)
{
  if (name == "arc_wavefront")
    return arc_wavefront();
  if (name == "fichera_lshape")
    return fichera_lshape();
  if (name == "poly_smoke")
    return poly_smoke(k);
  if (name == "poly_sine")
    return poly_sine(k);
  throw InvalidInput("unknown problem '" + name + "'");
}

std::vector<std::string> problem_names()
{
  return {"arc_wavefront", "fichera_lshape", "poly_smoke", "poly_sine"};
}

double verify_problem(const Problem &problem, int samples, unsigned seed)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.02, 0.98);
  const CoarseMesh &c = *problem.coarse;
  double worst = 0.0;
  for (int i = 0; i < samples; ++i)
  {
    const Rect &cell = c.cell(i % c.size());
    const Point x(cell.x0 + unif(rng) * cell.wx, cell.y0 + unif(rng) * cell.wy);
    const double lap = problem.u_jet(Jet::x(x.x()), Jet::y(x.y())).laplacian();
    const double f = problem.f(x);
    worst = std::max(worst, std::abs(f + lap) / std::max(1.0, std::abs(f)));
  }
  if (!(worst <= 1e-6))
    throw InvariantViolation("problem '" + problem.name + "': -Laplace(u) != f (defect " +
                             std::to_string(worst) + ")");
  return worst;
}

std::function<double(double)> tanh_hat_emulation(double m, Interval interval)
{
  if (!(m > 0))
    throw InvalidInput("tanh_hat_emulation: m must be positive");
  if (!(interval.hi > interval.lo))
    throw InvalidInput("tanh_hat_emulation: empty interval");
  // W1 = [m, -m]^T, b1 = [m/4, m/4]^T, W2 = [m, m], b2 = 0, tanh after both layers.
  return [m, interval](double x) {
    const double t = (2.0 * x - (interval.lo + interval.hi)) / (interval.hi - interval.lo);
    const double h1 = std::tanh(m * t + m / 4);
    const double h2 = std::tanh(-m * t + m / 4);
    return std::tanh(m * h1 + m * h2);
  };
}

}  // namespace feinn
