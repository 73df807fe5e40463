#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "feinn/problems.hpp"
#include "feinn/training.hpp"

using namespace feinn;

namespace
{

std::shared_ptr<const ForestMesh> square(int levels)
{
  return std::make_shared<const ForestMesh>(refine_uniform(new_forest(CoarseMesh::unit_square()), levels));
}

/// Two-level mesh: uniform level 1 plus one refined corner.
std::shared_ptr<const ForestMesh> two_level()
{
  auto m = refine_uniform(new_forest(CoarseMesh::unit_square()), 1);
  const std::vector<int> r = {0};
  return std::make_shared<const ForestMesh>(adapt(m, r, {}));
}

Mlp small_net(unsigned seed)
{
  Mlp net = mlp_new({2, 8, 8, 1}, seed);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (int k = 0; k < net.num_layers(); ++k)
    for (auto &b : net.bias(k))
      b = u(rng);
  return net;
}

Vector random_vector(int n, unsigned seed)
{
  std::mt19937 rng(seed);
  std::normal_distribution<double> d;
  Vector v(n);
  for (auto &x : v)
    x = d(rng);
  return v;
}

}  // namespace

TEST(DofVector, ZeroConstantAndLoop)
{
  const auto trial = build_fe_space(two_level(), 2);
  EXPECT_EQ(dof_vector(Mlp({2, 4, 1}), *trial).cwiseAbs().maxCoeff(), 0.0);
  Mlp c({2, 4, 1});
  c.bias(1)[0] = 1.75;
  const Vector v = dof_vector(c, *trial);
  ASSERT_EQ(v.size(), trial->num_free());
  EXPECT_EQ(v.cwiseAbs().maxCoeff(), 1.75);
  EXPECT_EQ(v.minCoeff(), 1.75);

  const Mlp net = small_net(1);
  const Vector batch = dof_vector(net, *trial);
  for (int i = 0; i < trial->num_free(); ++i)
  {
    const Points p = trial->dof_point(i);
    EXPECT_NEAR(batch[i], forward(net, p)[0], 1e-15);
  }
}

TEST(DiscreteL1Loss, Arithmetic)
{
  auto sys = std::make_shared<LinearSystem>();
  sys->A = SparseMat::identity(3);
  sys->rhs = Vector::Zero(3);
  const DiscreteL1Loss loss(sys);
  Vector g;
  EXPECT_EQ(loss.evaluate(Vector(Eigen::Vector3d(1, -2, 3)), &g), 6.0);
  EXPECT_EQ(g, Vector(Eigen::Vector3d(1, -1, 1)));
  EXPECT_EQ(loss.evaluate(Vector::Zero(3), &g), 0.0);
  EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
}

TEST(PreconditionedLoss, ZeroResidual)
{
  const auto p = poly_smoke(2);
  for (NormKind n : {NormKind::L1, NormKind::L2, NormKind::W11, NormKind::W12})
  {
    const auto setup = make_setup(two_level(), 2, p.f, p.u, {LossMode::preconditioned, n});
    // poly_smoke(2) is representable, so its interpolant has zero residual.
    const Vector u = interpolate(setup.trial, p.u).free_dofs();
    Vector g;
    EXPECT_LE(setup.loss->evaluate(u, &g), 1e-12);
    EXPECT_LE(g.cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(PreconditionedLoss, MatrixFormOracles)
{
  const auto p = arc_wavefront();
  const auto mesh = two_level();
  const Vector u = random_vector(build_fe_space(mesh, 2)->num_free(), 3);

  const auto l2 = make_setup(mesh, 2, p.f, p.u, {LossMode::preconditioned, NormKind::L2});
  const auto &pl = dynamic_cast<const PreconditionedLoss &>(*l2.loss);
  const Vector r = pl.riesz(u);
  const SparseMat m = assemble_mass(*l2.test);
  const double v = l2.loss->evaluate(u, nullptr);
  EXPECT_NEAR(v * v, r.dot(spmv(false, m, r)), 1e-12 * v * v);

  const auto w12 = make_setup(mesh, 2, p.f, p.u, {LossMode::preconditioned, NormKind::W12});
  const auto &pw = dynamic_cast<const PreconditionedLoss &>(*w12.loss);
  const SparseMat b = assemble_gram(*w12.test);
  const double w = w12.loss->evaluate(u, nullptr);
  const Vector rw = pw.riesz(u);
  EXPECT_NEAR(w * w, rw.dot(spmv(false, b, rw)), 1e-12 * w * w);
  // B r = A u - f, so r^T B r = r^T (A u - f).
  EXPECT_NEAR(w * w, rw.dot(spmv(false, w12.sys->A, u) - w12.sys->rhs), 1e-10 * w * w);
}

TEST(PreconditionedLoss, GradientMatchesFiniteDifferences)
{
  const auto p = arc_wavefront();
  const auto mesh = two_level();
  for (NormKind n : {NormKind::L2, NormKind::W12, NormKind::W11, NormKind::L1})
  {
    const auto s = make_setup(mesh, 2, p.f, p.u, {LossMode::preconditioned, n});
    const Vector u = random_vector(s.trial->num_free(), 5);
    Vector g;
    s.loss->evaluate(u, &g);
    const double eps = 1e-6;
    for (int i = 0; i < u.size(); i += 3)
    {
      Vector up = u, um = u;
      up[i] += eps;
      um[i] -= eps;
      const double fd = (s.loss->evaluate(up, nullptr) - s.loss->evaluate(um, nullptr)) / (2 * eps);
      EXPECT_NEAR(g[i], fd, 1e-5 * std::max(1.0, std::abs(fd))) << to_string(n) << " i=" << i;
    }
  }
}

TEST(NetworkLoss, GradientMatchesFiniteDifferences)
{
  const auto p = arc_wavefront();
  for (LossMode mode : {LossMode::discrete_l1, LossMode::preconditioned})
  {
    const auto s = make_setup(two_level(), 2, p.f, p.u, {mode, NormKind::W12});
    Mlp net = small_net(2);
    Vector g;
    network_loss(net, s, &g);
    const Vector theta = net.flatten();
    const double eps = 1e-6;
    for (int i = 0; i < theta.size(); i += 7)
    {
      Vector tp = theta, tm = theta;
      tp[i] += eps;
      tm[i] -= eps;
      net.unflatten(tp);
      const double fp = network_loss(net, s, nullptr);
      net.unflatten(tm);
      const double fm = network_loss(net, s, nullptr);
      const double fd = (fp - fm) / (2 * eps);
      EXPECT_NEAR(g[i], fd, 1e-5 * std::max(1.0, std::abs(fd))) << to_string(mode) << " i=" << i;
    }
    net.unflatten(theta);
  }
}

TEST(InterpolatedNetwork, KeepsLifting)
{
  const auto p = arc_wavefront();
  const auto s = make_setup(two_level(), 2, p.f, p.u, {});
  const Mlp net = small_net(3);
  const auto f = interpolated_network(net, s);
  EXPECT_EQ(f.free_dofs(), dof_vector(net, *s.trial));
  EXPECT_EQ(f.dofs().tail(s.trial->num_dirichlet()), s.lifting.dofs().tail(s.trial->num_dirichlet()));
}

TEST(Lbfgs, Quadratic)
{
  const int n = 10;
  const Vector target = random_vector(n, 1);
  const Objective f = [&](const Vector &x, Vector &g) {
    g = x - target;
    return 0.5 * g.squaredNorm();
  };
  LbfgsOptions opt;
  opt.max_iters = 2 * n;
  const auto rep = lbfgs_minimize(f, Vector::Zero(n), opt);
  EXPECT_LE((rep.theta - target).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE(rep.iterations, 2 * n);
}

TEST(Lbfgs, Rosenbrock)
{
  const Objective f = [](const Vector &x, Vector &g) {
    const double a = 1 - x[0], b = x[1] - x[0] * x[0];
    g.resize(2);
    g[0] = -2 * a - 400 * x[0] * b;
    g[1] = 200 * b;
    return a * a + 100 * b * b;
  };
  for (bool dense : {false, true})
  {
    LbfgsOptions opt;
    opt.max_iters = 200;
    opt.dense = dense;
    const auto rep = lbfgs_minimize(f, Vector(Eigen::Vector2d(-1.2, 1)), opt);
    EXPECT_NEAR(rep.theta[0], 1.0, 1e-8);
    EXPECT_NEAR(rep.theta[1], 1.0, 1e-8);
    for (std::size_t i = 1; i < rep.loss_trace.size(); ++i)
      EXPECT_LE(rep.loss_trace[i], rep.loss_trace[i - 1]);
    EXPECT_EQ(rep.loss_trace.size(), static_cast<std::size_t>(rep.iterations) + 1);
  }
}

TEST(Lbfgs, DenseRejectedForLargeProblems)
{
  const Objective f = [](const Vector &x, Vector &g) {
    g = x;
    return 0.5 * x.squaredNorm();
  };
  LbfgsOptions opt;
  opt.dense = true;
  EXPECT_THROW(lbfgs_minimize(f, Vector::Ones(2500), opt), InvalidInput);
}

TEST(Train, MonotoneTraceOnArc)
{
  const auto p = arc_wavefront();
  const auto s = make_setup(two_level(), 2, p.f, p.u, {});
  Mlp net = small_net(4);
  LbfgsOptions opt;
  opt.max_iters = 40;
  const auto rep = train(net, s, opt);
  ASSERT_GE(rep.loss_trace.size(), 2u);
  for (std::size_t i = 1; i < rep.loss_trace.size(); ++i)
    EXPECT_LE(rep.loss_trace[i], rep.loss_trace[i - 1]);
  EXPECT_LT(rep.loss_trace.back(), rep.loss_trace.front());
  EXPECT_EQ(net.flatten(), rep.theta);

  std::ostringstream os;
  write_trace_csv(os, rep);
  EXPECT_EQ(os.str().substr(0, 20), "iter,loss,grad_norm\n");
}

TEST(LastLayer, NeverIncreasesResidual)
{
  const auto p = arc_wavefront();
  const auto s = make_setup(square(2), 2, p.f, p.u, {});
  for (unsigned seed = 1; seed <= 3; ++seed)
  {
    Mlp net = small_net(seed);
    const auto rep = last_layer_solve(net, s);
    EXPECT_LE(rep.residual_after, rep.residual_before);
    const Vector r = spmv(false, s.sys->A, dof_vector(net, *s.trial)) - s.sys->rhs;
    EXPECT_NEAR(r.norm(), rep.residual_after, 1e-10 * std::max(1.0, rep.residual_after));
    // A second solve starts at the optimum.
    const auto again = last_layer_solve(net, s);
    EXPECT_LE(again.residual_after, rep.residual_after + 1e-8);
  }
}

TEST(Schedule, Bands)
{
  const Schedule arc{{5000, 10000}, {500, 1000, 1500}};
  EXPECT_EQ(iteration_schedule(3000, arc), 500);
  EXPECT_EQ(iteration_schedule(7000, arc), 1000);
  EXPECT_EQ(iteration_schedule(12000, arc), 1500);
  EXPECT_EQ(iteration_schedule(5000, arc), 500);
  EXPECT_EQ(iteration_schedule(123, Schedule{{}, {77}}), 77);
  EXPECT_EQ(scheduled_iterations(3000, arc, true, false), 125);
  EXPECT_EQ(scheduled_iterations(3000, arc, true, true), 250);
  EXPECT_EQ(scheduled_iterations(3000, arc, false, true), 500);
  EXPECT_THROW(iteration_schedule(1, Schedule{{5, 5}, {1, 2, 3}}), InvalidInput);
  EXPECT_THROW(iteration_schedule(1, Schedule{{5}, {1}}), InvalidInput);
  EXPECT_EQ(arc_wavefront().schedule.milestones, arc.milestones);
  EXPECT_EQ(arc_wavefront().schedule.iters, arc.iters);
  EXPECT_EQ(fichera_lshape().schedule.milestones, (std::vector<int>{10000, 20000}));
  EXPECT_EQ(fichera_lshape().schedule.iters, (std::vector<int>{3000, 4000, 5000}));
}

TEST(LossConfig, ParseNames)
{
  EXPECT_EQ(parse_loss_mode("discrete_l1"), LossMode::discrete_l1);
  EXPECT_EQ(parse_loss_mode(to_string(LossMode::preconditioned)), LossMode::preconditioned);
  EXPECT_THROW(parse_loss_mode("l3"), InvalidInput);
}
