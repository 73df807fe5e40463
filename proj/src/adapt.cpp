#include "feinn/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "feinn/quadrature.hpp"

namespace feinn
{

IndicatorKind parse_indicator(const std::string &name)
{
  if (name == "kelly")
    return IndicatorKind::kelly;
  if (name == "network")
    return IndicatorKind::network;
  if (name == "real")
    return IndicatorKind::real;
  throw InvalidInput("unknown indicator '" + name + "' (expected kelly, network or real)");
}

std::string to_string(IndicatorKind kind)
{
  switch (kind)
  {
  case IndicatorKind::kelly:
    return "kelly";
  case IndicatorKind::network:
    return "network";
  case IndicatorKind::real:
    return "real";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Indicators

namespace
{

Point outward_normal(Face f)
{
  switch (f)
  {
  case Face::left:
    return {-1.0, 0.0};
  case Face::right:
    return {1.0, 0.0};
  case Face::bottom:
    return {0.0, -1.0};
  case Face::top:
    return {0.0, 1.0};
  }
  return {0.0, 0.0};
}

/// Face segment of a leaf.
std::pair<Point, Point> face_segment(const Leaf &l, Face f)
{
  const double x1 = l.x0 + l.hx, y1 = l.y0 + l.hy;
  switch (f)
  {
  case Face::left:
    return {{l.x0, l.y0}, {l.x0, y1}};
  case Face::right:
    return {{x1, l.y0}, {x1, y1}};
  case Face::bottom:
    return {{l.x0, l.y0}, {x1, l.y0}};
  case Face::top:
    return {{l.x0, y1}, {x1, y1}};
  }
  return {};
}

}  // namespace

std::vector<double> kelly_indicator(const FEFunction &total)
{
  const FESpace &space = total.space();
  const ForestMesh &mesh = space.mesh();
  const GaussRule1d g = gauss_legendre(space.degree() * space.subdivisions() + 1);
  const std::size_t nq = g.x.size();
  std::vector<Point> pts(nq), ga(nq), gb(nq);
  std::vector<double> va(nq), vb(nq);
  std::vector<double> out(mesh.num_leaves(), 0.0);

  for (int id = 0; id < mesh.num_leaves(); ++id)
  {
    const Leaf &leaf = mesh.leaf(id);
    const double cf = leaf.h() / 24.0;
    const auto nbs = mesh.face_neighbors(id);
    double acc = 0.0;
    for (Face f : kFaces)
    {
      const FaceNeighbor &nb = nbs[static_cast<int>(f)];
      if (nb.kind == NeighborKind::boundary)
        continue;
      const Point n = outward_normal(f);
      for (int j = 0; j < nb.count; ++j)
      {
        const int other = nb.ids[j];
        // Integrate over the smaller of the two faces.
        const auto [a, b] = nb.kind == NeighborKind::finer
                                ? face_segment(mesh.leaf(other), opposite(f))
                                : std::make_pair(nb.a, nb.b);
        const double len = (b - a).norm();
        for (std::size_t q = 0; q < nq; ++q)
          pts[q] = a + g.x[q] * (b - a);
        total.eval(id, pts, va, ga);
        total.eval(other, pts, vb, gb);
        double face = 0.0;
        for (std::size_t q = 0; q < nq; ++q)
        {
          const double jump = (ga[q] - gb[q]).dot(n);
          face += g.w[q] * jump * jump;
        }
        acc += cf * len * face;
      }
    }
    out[id] = std::sqrt(acc);
  }
  return out;
}

std::vector<double> network_indicator(const Mlp &net, const ForestMesh &mesh, const ScalarField &f)
{
  const QuadRule rule = tensor_gauss(8);
  const std::size_t nq = rule.points.size();
  const int nl = mesh.num_leaves();
  Points x(2, static_cast<Eigen::Index>(nq) * nl);
  for (int id = 0; id < nl; ++id)
  {
    const Leaf &l = mesh.leaf(id);
    for (std::size_t q = 0; q < nq; ++q)
      x.col(id * nq + q) = l.to_physical(rule.points[q].x(), rule.points[q].y());
  }
  const SpatialDerivs d = spatial_derivs(net, x);
  std::vector<double> out(nl);
  for (int id = 0; id < nl; ++id)
  {
    double acc = 0.0;
    for (std::size_t q = 0; q < nq; ++q)
    {
      const Eigen::Index c = id * nq + q;
      const double r = d.lap[c] + f(x.col(c));
      acc += rule.weights[q] * r * r;
    }
    out[id] = std::sqrt(mesh.leaf(id).area() * acc);
  }
  return out;
}

std::vector<double> real_indicator(const FEFunction &total, const ScalarField &u)
{
  return leaf_l2_errors(total, u);
}

// ---------------------------------------------------------------------------
// Marking

int fraction_count(double delta, int n)
{
  const double x = delta * n;
  return std::clamp(static_cast<int>(std::ceil(x - 1e-9 * std::max(1.0, x))), 0, n);
}

Marking mark(std::span<const double> ind, double delta_r, double delta_c)
{
  const int n = static_cast<int>(ind.size());
  if (n == 0)
    throw InvalidInput("mark: empty indicator field");
  for (double v : ind)
    if (!std::isfinite(v) || v < 0)
      throw InvalidInput("mark: indicator values must be finite and non-negative");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return ind[a] > ind[b]; });

  Marking m;
  const int nr = fraction_count(delta_r, n);
  const int nc = fraction_count(delta_c, n);
  m.refine.assign(order.begin(), order.begin() + nr);
  std::vector<char> refined(n, 0);
  for (int id : m.refine)
    refined[id] = 1;
  for (int i = n - nc; i < n; ++i)
    if (!refined[order[i]])
      m.coarsen.push_back(order[i]);
  std::sort(m.refine.begin(), m.refine.end());
  std::sort(m.coarsen.begin(), m.coarsen.end());
  return m;
}

void write_history_csv(std::ostream &os, const AdaptHistory &history)
{
  const auto prec = os.precision(17);
  os << "step,leaves,dofs,iters,loss,feinn_l2,feinn_h1,nn_l2,nn_h1\n";
  for (const auto &s : history.steps)
    os << s.step << ',' << s.leaves << ',' << s.dofs << ',' << s.iters << ',' << s.loss << ','
       << s.feinn_l2 << ',' << s.feinn_h1 << ',' << s.nn_l2 << ',' << s.nn_h1 << '\n';
  os.precision(prec);
}

// ---------------------------------------------------------------------------
// Loops

namespace
{

void validate_marking(const AdaptConfig &c)
{
  const double delta_r = c.delta_r, delta_c = c.delta_c;
  if (!(delta_r > 0 && delta_r < 1) || !(delta_c >= 0 && delta_c < 1) || !(delta_r + delta_c < 1))
    throw InvalidInput("refine/coarsen ratios must lie in (0,1) with delta_r + delta_c < 1");
  if (c.max_steps < 0)
    throw InvalidInput("max_steps must be non-negative");
  if (c.order < 1)
    throw InvalidInput("order must be at least 1");
}

}  // namespace

void AdaptConfig::validate() const
{
  validate_marking(*this);
  if (fixed_iters <= 0)
    iteration_schedule(0, schedule);
}

namespace
{

std::shared_ptr<const ForestMesh> adapt_step(const ForestMesh &mesh, const std::vector<double> &ind,
                                             const AdaptConfig &config)
{
  const Marking m = mark(ind, config.delta_r, config.delta_c);
  auto next = std::make_shared<const ForestMesh>(adapt(mesh, m.refine, m.coarsen));
  if (config.on_marking)
    config.on_marking(mesh, m, *next);
  return next;
}

}  // namespace

FeinnResult adaptive_feinn(const Problem &problem, Mlp net, const AdaptConfig &config,
                           std::shared_ptr<const ForestMesh> initial)
{
  config.validate();
  FeinnResult res;
  auto mesh = initial ? initial : problem.initial_mesh();
  const ExactSolution exact = problem.exact();
  const bool precond = config.loss.mode == LossMode::preconditioned;

  for (int step = 0; step <= config.max_steps; ++step)
  {
    if (config.on_mesh)
      config.on_mesh(step, *mesh);
    const FeinnSetup setup = make_setup(mesh, config.order, problem.f, problem.u, config.loss);
    const int nf = setup.trial->num_free();

    if (config.last_layer)
      last_layer_solve(net, setup);
    LbfgsOptions opts = config.optimizer;
    opts.max_iters = config.fixed_iters > 0
                         ? config.fixed_iters
                         : scheduled_iterations(nf, config.schedule, precond, step == config.max_steps);
    const TrainReport rep = train(net, setup, opts);
    if (config.on_train)
      config.on_train(step, net, rep);

    const FEFunction total = interpolated_network(net, setup);
    if (config.on_solution)
      config.on_solution(step, total);

    StepRecord rec;
    rec.step = step;
    rec.leaves = mesh->num_leaves();
    rec.dofs = nf;
    rec.iters = rep.iterations;
    rec.loss = rep.loss_trace.back();
    rec.max_level = mesh->max_level();
    const ErrorNorms fe = error_norms(total, exact);
    rec.feinn_l2 = fe.l2;
    rec.feinn_h1 = fe.h1;
    const BatchField raw = [&net](std::span<const Point> pts, std::span<double> v, std::span<Point> g) {
      const SpatialDerivs d = spatial_derivs(net, to_points(pts));
      for (std::size_t i = 0; i < pts.size(); ++i)
      {
        v[i] = d.value[i];
        g[i] = Point(d.dx[i], d.dy[i]);
      }
    };
    const ErrorNorms nn = error_norms(raw, *mesh, config.order, exact);
    rec.nn_l2 = nn.l2;
    rec.nn_h1 = nn.h1;
    res.history.steps.push_back(rec);

    if (step == config.max_steps)
      break;
    std::vector<double> ind;
    switch (config.indicator)
    {
    case IndicatorKind::kelly:
      ind = kelly_indicator(total);
      break;
    case IndicatorKind::network:
      ind = network_indicator(net, *mesh, problem.f);
      break;
    case IndicatorKind::real:
      ind = real_indicator(total, problem.u);
      break;
    }
    mesh = adapt_step(*mesh, ind, config);
  }
  res.net = std::move(net);
  res.mesh = mesh;
  return res;
}

FEFunction fem_solve(const Problem &problem, std::shared_ptr<const ForestMesh> mesh, int k, bool petrov)
{
  const SpacePtr trial = build_fe_space(std::move(mesh), k);
  const SpacePtr test = petrov ? build_test_space(trial) : trial;
  const FEFunction lifting = lift_dirichlet(trial, problem.u);
  const LinearSystem sys = assemble_system(*trial, *test, problem.f, lifting);
  Vector x;
  if (petrov)
  {
    const CgnrReport rep = cgnr_solve(sys.A, sys.rhs, 1e-12, std::max(1000, 50 * sys.A.cols()));
    if (!rep.converged)
      throw Error("fem_solve: cgnr did not converge (relative residual " +
                  std::to_string(rep.rel_residual) + ")");
    x = rep.x;
  }
  else
    x = spd_factor(sys.A).solve(sys.rhs);
  return combine(x, lifting);
}

FemResult adaptive_fem(const Problem &problem, const AdaptConfig &config,
                       std::shared_ptr<const ForestMesh> initial)
{
  if (config.indicator == IndicatorKind::network)
    throw InvalidInput("adaptive_fem: the network indicator needs a network");
  validate_marking(config);
  FemResult res;
  auto mesh = initial ? initial : problem.initial_mesh();
  const ExactSolution exact = problem.exact();
  for (int step = 0; step <= config.max_steps; ++step)
  {
    if (config.on_mesh)
      config.on_mesh(step, *mesh);
    FEFunction sol = fem_solve(problem, mesh, config.order, false);
    if (config.on_solution)
      config.on_solution(step, sol);
    StepRecord rec;
    rec.step = step;
    rec.leaves = mesh->num_leaves();
    rec.dofs = sol.space().num_free();
    rec.max_level = mesh->max_level();
    const ErrorNorms e = error_norms(sol, exact);
    rec.feinn_l2 = e.l2;
    rec.feinn_h1 = e.h1;
    res.history.steps.push_back(rec);
    res.solutions.push_back(sol);
    if (step == config.max_steps)
      break;
    const std::vector<double> ind = config.indicator == IndicatorKind::kelly
                                        ? kelly_indicator(sol)
                                        : real_indicator(sol, problem.u);
    mesh = adapt_step(*mesh, ind, config);
  }
  res.mesh = mesh;
  return res;
}

FemResult uniform_fem(const Problem &problem, int k, int first, int last)
{
  if (first < 0 || last < first)
    throw InvalidInput("uniform_fem: invalid level range");
  FemResult res;
  const ExactSolution exact = problem.exact();
  for (int level = first; level <= last; ++level)
  {
    auto mesh = problem.initial_mesh(level);
    FEFunction sol = fem_solve(problem, mesh, k, false);
    StepRecord rec;
    rec.step = level - first;
    rec.leaves = mesh->num_leaves();
    rec.dofs = sol.space().num_free();
    rec.max_level = mesh->max_level();
    const ErrorNorms e = error_norms(sol, exact);
    rec.feinn_l2 = e.l2;
    rec.feinn_h1 = e.h1;
    res.history.steps.push_back(rec);
    res.solutions.push_back(std::move(sol));
    res.mesh = mesh;
  }
  return res;
}

}  // namespace feinn
