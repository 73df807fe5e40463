#include "feinn/training.hpp"

#include <cmath>
#include <deque>
#include <iostream>
#include <limits>

#include <Eigen/Cholesky>

#include "feinn/quadrature.hpp"

namespace feinn
{

LossMode parse_loss_mode(const std::string &name)
{
  if (name == "discrete_l1")
    return LossMode::discrete_l1;
  if (name == "preconditioned")
    return LossMode::preconditioned;
  throw InvalidInput("unknown loss mode '" + name + "' (expected discrete_l1 or preconditioned)");
}

std::string to_string(LossMode mode)
{
  return mode == LossMode::discrete_l1 ? "discrete_l1" : "preconditioned";
}

// ---------------------------------------------------------------------------
// Losses

double DiscreteL1Loss::evaluate(const Vector &u, Vector *grad_u) const
{
  const Vector r = spmv(false, sys_->A, u) - sys_->rhs;
  if (grad_u)
  {
    const Vector s = r.unaryExpr([](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
    *grad_u = spmv(true, sys_->A, s);
  }
  return r.lpNorm<1>();
}

PreconditionedLoss::PreconditionedLoss(std::shared_ptr<const LinearSystem> sys, SpacePtr test,
                                       std::shared_ptr<const SpdFactor> gram, NormKind norm)
    : sys_(std::move(sys)), test_(std::move(test)), gram_(std::move(gram)), norm_(norm)
{
  if (gram_->size() != test_->num_free() || sys_->A.rows() != test_->num_free())
    throw InvalidInput("PreconditionedLoss: Gram matrix does not match the test space");
  const QuadRule rule = subdivided_gauss(test_->degree() + 2, test_->subdivisions());
  const int npl = test_->nodes_per_leaf();
  const int nq = static_cast<int>(rule.points.size());
  weights_ = rule.weights;
  val_.resize(npl, nq);
  dxi_.resize(npl, nq);
  deta_.resize(npl, nq);
  for (int q = 0; q < nq; ++q)
    test_->reference_basis(rule.points[q].x(), rule.points[q].y(), val_.col(q).data(),
                           dxi_.col(q).data(), deta_.col(q).data());
}

namespace
{

/// True when every entry of A u - f is below the rounding error of its own
/// evaluation, i.e. u solves the system to working precision.
bool at_roundoff(const SparseMat &a, const Vector &u, const Vector &f, const Vector &d)
{
  constexpr double tol = 64 * std::numeric_limits<double>::epsilon();
  const auto &rp = a.row_ptr();
  for (int i = 0; i < a.rows(); ++i)
  {
    double scale = std::abs(f[i]);
    for (int k = rp[i]; k < rp[i + 1]; ++k)
      scale += std::abs(a.values()[k] * u[a.col_idx()[k]]);
    if (std::abs(d[i]) > tol * scale)
      return false;
  }
  return true;
}

}  // namespace

Vector PreconditionedLoss::riesz(const Vector &u) const
{
  return gram_->solve(spmv(false, sys_->A, u) - sys_->rhs);
}

double PreconditionedLoss::evaluate(const Vector &u, Vector *grad_u) const
{
  const int nf = test_->num_free();
  const Vector d = spmv(false, sys_->A, u) - sys_->rhs;
  Vector full = Vector::Zero(test_->num_dofs());
  full.head(nf) = gram_->solve(d);
  const FEFunction rh(test_, full);
  const double value = integrate_norm(rh, norm_);
  if (!grad_u)
    return value;
  // The norm is not differentiable at r = 0; use the minimal subgradient there.
  if (value == 0.0 || at_roundoff(sys_->A, u, sys_->rhs, d))
  {
    *grad_u = Vector::Zero(u.size());
    return value;
  }

  // w_i = d value / d r_i by quadrature of the norm integrand against the test basis.
  constexpr double eps = 1e-12;
  const ForestMesh &mesh = test_->mesh();
  const int npl = test_->nodes_per_leaf();
  Vector w = Vector::Zero(nf);
  Eigen::VectorXd loc(npl);
  for (int id = 0; id < mesh.num_leaves(); ++id)
  {
    const Leaf &l = mesh.leaf(id);
    rh.local_values(id, loc.data());
    const Eigen::RowVectorXd v = loc.transpose() * val_;
    const Eigen::RowVectorXd gx = (loc.transpose() * dxi_) / l.hx;
    const Eigen::RowVectorXd gy = (loc.transpose() * deta_) / l.hy;
    Eigen::RowVectorXd cv = Eigen::RowVectorXd::Zero(v.size());
    Eigen::RowVectorXd cx = cv, cy = cv;
    for (Eigen::Index q = 0; q < v.size(); ++q)
    {
      const double wq = weights_[q] * l.area();
      switch (norm_)
      {
      case NormKind::L1:
        cv[q] = wq * (v[q] > 0 ? 1.0 : (v[q] < 0 ? -1.0 : 0.0));
        break;
      case NormKind::L2:
        cv[q] = wq * v[q] / value;
        break;
      case NormKind::W11: {
        const double m = std::sqrt(gx[q] * gx[q] + gy[q] * gy[q] + eps * eps);
        cx[q] = wq * gx[q] / m;
        cy[q] = wq * gy[q] / m;
        break;
      }
      case NormKind::W12:
        cx[q] = wq * gx[q] / value;
        cy[q] = wq * gy[q] / value;
        break;
      }
    }
    const Eigen::VectorXd wloc =
        val_ * cv.transpose() + (dxi_ * cx.transpose()) / l.hx + (deta_ * cy.transpose()) / l.hy;
    const auto nodes = test_->leaf_nodes(id);
    for (int m = 0; m < npl; ++m)
      for (const auto &e : test_->node_expansion(nodes[m]))
        if (e.dof < nf)
          w[e.dof] += e.coef * wloc[m];
  }
  *grad_u = spmv(true, sys_->A, gram_->solve(w));
  return value;
}

// ---------------------------------------------------------------------------
// Setup

FeinnSetup make_setup(std::shared_ptr<const ForestMesh> mesh, int k, const ScalarField &f,
                      const ScalarField &g, const LossConfig &config)
{
  FeinnSetup s;
  s.config = config;
  s.trial = build_fe_space(std::move(mesh), k);
  s.test = build_test_space(s.trial);
  s.lifting = lift_dirichlet(s.trial, g);
  s.sys = std::make_shared<const LinearSystem>(assemble_system(*s.trial, *s.test, f, s.lifting));
  std::vector<Point> pts;
  for (int i = 0; i < s.trial->num_free(); ++i)
    pts.push_back(s.trial->dof_point(i));
  s.free_points = to_points(pts);
  if (config.mode == LossMode::preconditioned)
  {
    s.gram = std::make_shared<const SpdFactor>(assemble_gram(*s.test));
    s.loss = std::make_shared<PreconditionedLoss>(s.sys, s.test, s.gram, config.norm);
  }
  else
    s.loss = std::make_shared<DiscreteL1Loss>(s.sys);
  return s;
}

Vector dof_vector(const Mlp &net, const FESpace &trial)
{
  std::vector<Point> pts;
  pts.reserve(trial.num_free());
  for (int i = 0; i < trial.num_free(); ++i)
    pts.push_back(trial.dof_point(i));
  return forward(net, to_points(pts)).transpose();
}

double network_loss(const Mlp &net, const FeinnSetup &setup, Vector *grad_theta)
{
  const Vector u = forward(net, setup.free_points).transpose();
  if (!grad_theta)
    return setup.loss->evaluate(u, nullptr);
  Vector gu;
  const double value = setup.loss->evaluate(u, &gu);
  *grad_theta = vjp(net, setup.free_points, gu.transpose());
  return value;
}

FEFunction interpolated_network(const Mlp &net, const FeinnSetup &setup)
{
  return combine(forward(net, setup.free_points).transpose(), setup.lifting);
}

// ---------------------------------------------------------------------------
// L-BFGS with a strong Wolfe line search

namespace
{

struct Probe
{
  double alpha = 0.0;
  double f = 0.0;
  double d = 0.0;  // directional derivative
  Vector x, g;
};

class LineSearch
{
public:
  LineSearch(const Objective &obj, const LbfgsOptions &o, const Vector &x0, double f0,
             const Vector &g0, const Vector &dir, int &evals)
      : obj_(obj), o_(o), x0_(x0), dir_(dir), evals_(evals)
  {
    zero_.alpha = 0.0;
    zero_.f = f0;
    zero_.d = g0.dot(dir);
    zero_.x = x0;
    zero_.g = g0;
  }

  /// Nocedal-Wright algorithm 3.5 with cubic-interpolation zoom.
  bool run(double alpha, Probe &out)
  {
    Probe prev = zero_;
    for (int i = 0; i < o_.max_line_search; ++i)
    {
      Probe cur = probe(alpha);
      if (!std::isfinite(cur.f) || cur.f > zero_.f + o_.c1 * alpha * zero_.d ||
          (i > 0 && cur.f >= prev.f))
        return zoom(prev, cur, out);
      if (std::abs(cur.d) <= -o_.c2 * zero_.d)
      {
        out = std::move(cur);
        return true;
      }
      if (cur.d >= 0)
        return zoom(cur, prev, out);
      prev = std::move(cur);
      alpha *= 2.0;
    }
    return false;
  }

private:
  Probe probe(double alpha)
  {
    Probe p;
    p.alpha = alpha;
    p.x = x0_ + alpha * dir_;
    p.f = obj_(p.x, p.g);
    ++evals_;
    p.d = std::isfinite(p.f) ? p.g.dot(dir_) : std::numeric_limits<double>::quiet_NaN();
    return p;
  }

  static double cubic_min(const Probe &a, const Probe &b)
  {
    if (!std::isfinite(b.f) || !std::isfinite(b.d))
      return 0.5 * (a.alpha + b.alpha);
    const double d1 = a.d + b.d - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    const double disc = d1 * d1 - a.d * b.d;
    if (disc < 0)
      return 0.5 * (a.alpha + b.alpha);
    const double d2 = std::copysign(std::sqrt(disc), b.alpha - a.alpha);
    return b.alpha - (b.alpha - a.alpha) * (b.d + d2 - d1) / (b.d - a.d + 2.0 * d2);
  }

  bool zoom(Probe lo, Probe hi, Probe &out)
  {
    for (int i = 0; i < o_.max_line_search; ++i)
    {
      const double a = std::min(lo.alpha, hi.alpha), b = std::max(lo.alpha, hi.alpha);
      double alpha = cubic_min(lo, hi);
      const double margin = 0.1 * (b - a);
      if (!std::isfinite(alpha) || alpha < a + margin || alpha > b - margin)
        alpha = 0.5 * (a + b);
      if (b - a <= 1e-16 * std::max(1.0, b))
        break;
      Probe cur = probe(alpha);
      if (!std::isfinite(cur.f) || cur.f > zero_.f + o_.c1 * alpha * zero_.d || cur.f >= lo.f)
        hi = std::move(cur);
      else
      {
        if (std::abs(cur.d) <= -o_.c2 * zero_.d)
        {
          out = std::move(cur);
          return true;
        }
        if (cur.d * (hi.alpha - lo.alpha) >= 0)
          hi = lo;
        lo = std::move(cur);
      }
    }
    // No strong Wolfe point; still hand back a sufficient-decrease point if one was seen.
    if (lo.alpha > 0 && lo.f < zero_.f)
      out = std::move(lo);
    return false;
  }

  const Objective &obj_;
  const LbfgsOptions &o_;
  const Vector &x0_;
  const Vector &dir_;
  int &evals_;
  Probe zero_;
};

}  // namespace

TrainReport lbfgs_minimize(const Objective &objective, Vector theta0, const LbfgsOptions &o)
{
  if (o.max_iters < 1)
    throw InvalidInput("lbfgs_minimize: need at least one iteration");
  if (o.memory < 1)
    throw InvalidInput("lbfgs_minimize: memory must be positive");
  const Eigen::Index n = theta0.size();
  if (o.dense && n >= 2000)
    throw InvalidInput("dense BFGS is limited to fewer than 2000 parameters");

  TrainReport rep;
  Vector x = std::move(theta0);
  Vector g;
  double f = objective(x, g);
  rep.evaluations = 1;
  if (!std::isfinite(f))
    throw Error("lbfgs_minimize: initial loss is not finite");
  rep.loss_trace.push_back(f);
  rep.grad_norm_trace.push_back(g.lpNorm<Eigen::Infinity>());

  std::deque<Vector> S, Y;
  std::deque<double> rho;
  Eigen::MatrixXd H;
  bool h_init = false;

  auto direction = [&]() -> Vector {
    if (o.dense)
      return h_init ? Vector(-(H * g)) : Vector(-g);
    Vector q = g;
    const int m = static_cast<int>(S.size());
    std::vector<double> alpha(m);
    for (int i = m - 1; i >= 0; --i)
    {
      alpha[i] = rho[i] * S[i].dot(q);
      q -= alpha[i] * Y[i];
    }
    if (m > 0)
      q *= S.back().dot(Y.back()) / Y.back().squaredNorm();
    for (int i = 0; i < m; ++i)
    {
      const double beta = rho[i] * Y[i].dot(q);
      q += (alpha[i] - beta) * S[i];
    }
    return -q;
  };

  auto reset = [&]() {
    S.clear();
    Y.clear();
    rho.clear();
    h_init = false;
  };

  for (int it = 1; it <= o.max_iters; ++it)
  {
    if (g.lpNorm<Eigen::Infinity>() < o.grad_tol)
      break;
    Vector d = direction();
    bool fresh = o.dense ? !h_init : S.empty();
    if (!(g.dot(d) < 0))
    {
      reset();
      d = -g;
      fresh = true;
    }
    const double alpha0 = fresh ? std::min(1.0, 1.0 / g.norm()) : 1.0;

    Probe next;
    LineSearch ls(objective, o, x, f, g, d, rep.evaluations);
    if (!ls.run(alpha0, next))
    {
      ++rep.line_search_failures;
      if (!(next.alpha > 0 && next.f < f))
      {
        // Steepest descent with Armijo backtracking.
        next = Probe{};
        const Vector sd = -g;
        double alpha = std::min(1.0, 1.0 / g.norm());
        const double slope = -g.squaredNorm();
        for (int i = 0; i < 60; ++i, alpha *= 0.5)
        {
          Vector xt = x + alpha * sd;
          Vector gt;
          const double ft = objective(xt, gt);
          ++rep.evaluations;
          if (std::isfinite(ft) && ft <= f + o.c1 * alpha * slope && ft < f)
          {
            next.alpha = alpha;
            next.f = ft;
            next.x = std::move(xt);
            next.g = std::move(gt);
            break;
          }
        }
        if (next.alpha == 0.0)
          break;
      }
    }

    const Vector s = next.x - x;
    const Vector y = next.g - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm() && sy > 0)
    {
      if (o.dense)
      {
        if (!h_init)
        {
          H = (sy / y.squaredNorm()) * Eigen::MatrixXd::Identity(n, n);
          h_init = true;
        }
        const double r = 1.0 / sy;
        const Vector hy = H * y;
        const double yhy = y.dot(hy);
        H += (r * r * yhy + r) * (s * s.transpose()) - r * (hy * s.transpose() + s * hy.transpose());
      }
      else
      {
        S.push_back(s);
        Y.push_back(y);
        rho.push_back(1.0 / sy);
        if (static_cast<int>(S.size()) > o.memory)
        {
          S.pop_front();
          Y.pop_front();
          rho.pop_front();
        }
      }
    }

    x = std::move(next.x);
    g = std::move(next.g);
    f = next.f;
    rep.iterations = it;
    rep.loss_trace.push_back(f);
    rep.grad_norm_trace.push_back(g.lpNorm<Eigen::Infinity>());
    if (o.on_iteration)
      o.on_iteration(it, x, f, rep.grad_norm_trace.back());
  }
  rep.theta = std::move(x);
  return rep;
}

TrainReport train(Mlp &net, const FeinnSetup &setup, const LbfgsOptions &options)
{
  Mlp work = net;
  const Objective obj = [&](const Vector &theta, Vector &grad) {
    work.unflatten(theta);
    return network_loss(work, setup, &grad);
  };
  TrainReport rep = lbfgs_minimize(obj, net.flatten(), options);
  net.unflatten(rep.theta);
  return rep;
}

void write_trace_csv(std::ostream &os, const TrainReport &report)
{
  const auto prec = os.precision(17);
  os << "iter,loss,grad_norm\n";
  for (std::size_t i = 0; i < report.loss_trace.size(); ++i)
    os << i << ',' << report.loss_trace[i] << ',' << report.grad_norm_trace[i] << '\n';
  os.precision(prec);
}

// ---------------------------------------------------------------------------
// Last-layer solve

LastLayerReport last_layer_solve(Mlp &net, const FeinnSetup &setup)
{
  const LinearSystem &sys = *setup.sys;
  const int L = net.num_layers();
  const Eigen::MatrixXd feat = last_layer_features(net, setup.free_points);
  const Eigen::Index h = feat.rows();
  const Eigen::Index nf = feat.cols();

  Eigen::MatrixXd phi(nf, h + 1);
  phi.leftCols(h) = feat.transpose();
  phi.col(h).setOnes();
  Eigen::MatrixXd m(sys.A.rows(), h + 1);
  for (Eigen::Index c = 0; c <= h; ++c)
    m.col(c) = spmv(false, sys.A, phi.col(c));

  Vector w0(h + 1);
  w0.head(h) = net.weight(L - 1).row(0).transpose();
  w0[h] = net.bias(L - 1)[0];

  LastLayerReport rep;
  rep.residual_before = (m * w0 - sys.rhs).norm();

  const SparseMat ms = SparseMat::from_dense(m);
  CgnrReport cg = cgnr_solve(ms, sys.rhs, 1e-12, 0, &w0);
  rep.iterations = cg.iterations;
  Vector best = cg.x;
  double best_res = (m * cg.x - sys.rhs).norm();
  if (!cg.converged)
  {
    rep.regularized = true;
    const Eigen::MatrixXd mtm = m.transpose() * m;
    const double lambda = 1e-10 * std::max(1.0, mtm.diagonal().mean());
    const Eigen::MatrixXd reg = mtm + lambda * Eigen::MatrixXd::Identity(h + 1, h + 1);
    const Vector wr = reg.ldlt().solve(m.transpose() * sys.rhs);
    const double res = (m * wr - sys.rhs).norm();
    std::clog << "warning: last-layer system is ill-conditioned (cgnr residual "
              << cg.rel_residual << "); used a ridge-regularized solve\n";
    if (std::isfinite(res) && res < best_res)
    {
      best = wr;
      best_res = res;
    }
  }

  if (std::isfinite(best_res) && best_res <= rep.residual_before)
  {
    net.weight(L - 1).row(0) = best.head(h).transpose();
    net.bias(L - 1)[0] = best[h];
    rep.residual_after = best_res;
    rep.accepted = true;
  }
  else
    rep.residual_after = rep.residual_before;
  return rep;
}

// ---------------------------------------------------------------------------

int iteration_schedule(int dofs, const Schedule &schedule)
{
  if (schedule.iters.size() != schedule.milestones.size() + 1)
    throw InvalidInput("schedule needs exactly one more band than milestones");
  for (std::size_t i = 1; i < schedule.milestones.size(); ++i)
    if (schedule.milestones[i] <= schedule.milestones[i - 1])
      throw InvalidInput("schedule milestones must be strictly increasing");
  std::size_t band = 0;
  while (band < schedule.milestones.size() && dofs > schedule.milestones[band])
    ++band;
  return schedule.iters[band];
}

int scheduled_iterations(int dofs, const Schedule &schedule, bool preconditioned, bool final_step)
{
  int it = iteration_schedule(dofs, schedule);
  if (preconditioned)
    it /= final_step ? 2 : 4;
  return std::max(1, it);
}

}  // namespace feinn
