#include "feinn/space.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <random>
#include <unordered_map>

namespace feinn
{

void lattice_basis_1d(int p, int s, double t, double *val, double *der)
{
  const int n = p * s;
  std::fill(val, val + n + 1, 0.0);
  std::fill(der, der + n + 1, 0.0);
  t = std::clamp(t, 0.0, 1.0);
  const int j = std::min(static_cast<int>(std::floor(t * s)), s - 1);
  const double tau = t * s - j;
  for (int i = 0; i <= p; ++i)
  {
    double v = 1.0, d = 0.0;
    for (int m = 0; m <= p; ++m)
    {
      if (m == i)
        continue;
      const double denom = static_cast<double>(i - m) / p;
      const double factor = (tau - static_cast<double>(m) / p) / denom;
      d = d * factor + v / denom;
      v *= factor;
    }
    val[j * p + i] = v;
    der[j * p + i] = d * s;
  }
}

namespace
{

struct NodeKey
{
  std::uint64_t packed;
  bool boundary;
};

std::uint64_t pack_node(int root, std::int64_t x, std::int64_t y)
{
  return (static_cast<std::uint64_t>(root) << 48) | (static_cast<std::uint64_t>(x) << 24) |
         static_cast<std::uint64_t>(y);
}

/// Canonical key of a root-lattice point: the smallest representation over all
/// roots sharing it. Also reports whether it lies on the domain boundary.
NodeKey canonical(const CoarseMesh &coarse, int root, std::int64_t x, std::int64_t y,
                  std::int64_t d)
{
  if (x > 0 && x < d && y > 0 && y < d)
    return {pack_node(root, x, y), false};

  struct Rep
  {
    int root;
    std::int64_t x, y;
  };
  std::vector<Rep> reps{{root, x, y}};
  bool boundary = false;
  for (std::size_t i = 0; i < reps.size(); ++i)
  {
    const Rep r = reps[i];
    auto visit = [&](Face f, std::int64_t nx, std::int64_t ny) {
      const int nb = coarse.neighbor(r.root, f);
      if (nb < 0)
      {
        boundary = true;
        return;
      }
      for (const auto &e : reps)
        if (e.root == nb && e.x == nx && e.y == ny)
          return;
      reps.push_back({nb, nx, ny});
    };
    if (r.x == 0)
      visit(Face::left, d, r.y);
    if (r.x == d)
      visit(Face::right, 0, r.y);
    if (r.y == 0)
      visit(Face::bottom, r.x, d);
    if (r.y == d)
      visit(Face::top, r.x, 0);
  }
  std::uint64_t best = pack_node(reps[0].root, reps[0].x, reps[0].y);
  for (const auto &e : reps)
    best = std::min(best, pack_node(e.root, e.x, e.y));
  return {best, boundary};
}

int face_local(Face f, int a, int n)
{
  switch (f)
  {
  case Face::left:
    return (n + 1) * a;
  case Face::right:
    return n + (n + 1) * a;
  case Face::bottom:
    return a;
  case Face::top:
    return a + (n + 1) * n;
  }
  return -1;
}

}  // namespace

FESpace::FESpace(std::shared_ptr<const ForestMesh> mesh, int degree, int subdivisions,
                 BoundaryPredicate dirichlet)
    : mesh_(std::move(mesh)), p_(degree), s_(subdivisions), n_(degree * subdivisions),
      dirichlet_(std::move(dirichlet))
{
  if (p_ < 1 || s_ < 1)
    throw InvalidInput("FESpace: degree and subdivisions must be positive");
  const ForestMesh &m = *mesh_;
  const int L = m.max_level();
  const std::int64_t d = static_cast<std::int64_t>(n_) << L;
  if (d >= (std::int64_t{1} << 24))
    throw InvalidInput("FESpace: mesh too deep for the node lattice");

  // Global nodes.
  const int npl = nodes_per_leaf();
  leaf_nodes_.resize(static_cast<std::size_t>(m.num_leaves()) * npl);
  std::unordered_map<std::uint64_t, int> index;
  index.reserve(static_cast<std::size_t>(m.num_leaves()) * npl);
  for (int id = 0; id < m.num_leaves(); ++id)
  {
    const Leaf &leaf = m.leaf(id);
    const int shift = L - leaf.key.level;
    for (int b = 0; b <= n_; ++b)
      for (int a = 0; a <= n_; ++a)
      {
        const std::int64_t x = (static_cast<std::int64_t>(leaf.key.ix) * n_ + a) << shift;
        const std::int64_t y = (static_cast<std::int64_t>(leaf.key.iy) * n_ + b) << shift;
        const NodeKey key = canonical(m.coarse(), leaf.key.root, x, y, d);
        auto [it, fresh] = index.emplace(key.packed, num_nodes());
        if (fresh)
        {
          coords_.push_back(leaf.to_physical(static_cast<double>(a) / n_, static_cast<double>(b) / n_));
          boundary_.push_back(key.boundary ? 1 : 0);
        }
        leaf_nodes_[static_cast<std::size_t>(id) * npl + a + (n_ + 1) * b] = it->second;
      }
  }
  const int nn = num_nodes();

  // Hanging nodes: odd positions on the fine side of a coarser face.
  std::vector<std::vector<std::pair<int, double>>> raw(nn);
  std::vector<double> wv(n_ + 1), wd(n_ + 1);
  for (int id = 0; id < m.num_leaves(); ++id)
  {
    const auto nbs = m.face_neighbors(id);
    const LeafKey &key = m.leaf(id).key;
    for (Face f : kFaces)
    {
      const FaceNeighbor &nb = nbs[static_cast<int>(f)];
      if (nb.kind != NeighborKind::coarser)
        continue;
      const int tangential = (f == Face::left || f == Face::right) ? key.iy : key.ix;
      const int o = tangential & 1;
      const auto fine = leaf_nodes(id);
      const auto coarse = leaf_nodes(nb.ids[0]);
      for (int a = 0; a <= n_; ++a)
      {
        const int num = o * n_ + a;
        if (num % 2 == 0)
          continue;
        const int node = fine[face_local(f, a, n_)];
        if (!raw[node].empty())
          continue;
        lattice_basis_1d(p_, s_, static_cast<double>(num) / (2 * n_), wv.data(), wd.data());
        for (int c = 0; c <= n_; ++c)
          if (wv[c] != 0.0)
            raw[node].emplace_back(coarse[face_local(opposite(f), c, n_)], wv[c]);
      }
    }
  }

  // Resolve constraint chains to non-hanging nodes.
  std::vector<int> state(nn, 0);
  std::vector<std::map<int, double>> resolved(nn);
  std::function<void(int)> resolve = [&](int node) {
    if (state[node] == 2)
      return;
    if (state[node] == 1)
      throw InvariantViolation("cyclic hanging-node constraints");
    state[node] = 1;
    for (const auto &[master, w] : raw[node])
    {
      if (raw[master].empty())
      {
        resolved[node][master] += w;
        continue;
      }
      resolve(master);
      for (const auto &[mm, ww] : resolved[master])
        resolved[node][mm] += w * ww;
    }
    state[node] = 2;
  };

  class_.assign(nn, DofClass::free);
  for (int i = 0; i < nn; ++i)
  {
    if (!raw[i].empty())
    {
      if (boundary_[i])
        throw InvariantViolation("hanging node on the domain boundary");
      class_[i] = DofClass::hanging;
      resolve(i);
    }
    else if (boundary_[i] && (!dirichlet_ || dirichlet_(coords_[i])))
      class_[i] = DofClass::dirichlet;
  }

  node_dof_.assign(nn, -1);
  for (int i = 0; i < nn; ++i)
    if (class_[i] == DofClass::free)
      node_dof_[i] = num_free_++;
  for (int i = 0; i < nn; ++i)
    if (class_[i] == DofClass::dirichlet)
      node_dof_[i] = num_free_ + num_dirichlet_++;
  dof_node_.resize(num_dofs());
  for (int i = 0; i < nn; ++i)
    if (node_dof_[i] >= 0)
      dof_node_[node_dof_[i]] = i;

  exp_ptr_.assign(nn + 1, 0);
  for (int i = 0; i < nn; ++i)
  {
    if (class_[i] != DofClass::hanging)
      exp_.push_back({node_dof_[i], 1.0});
    else
    {
      std::vector<Expansion> e;
      for (const auto &[master, w] : resolved[i])
        e.push_back({node_dof_[master], w});
      std::sort(e.begin(), e.end(), [](const Expansion &x, const Expansion &y) { return x.dof < y.dof; });
      exp_.insert(exp_.end(), e.begin(), e.end());
    }
    exp_ptr_[i + 1] = static_cast<int>(exp_.size());
  }
}

void FESpace::reference_basis(double xi, double eta, double *val, double *dxi, double *deta) const
{
  double vx[32], dx[32], vy[32], dy[32];
  if (n_ >= 32)
    throw InvalidInput("reference_basis: lattice too large");
  lattice_basis_1d(p_, s_, xi, vx, dx);
  lattice_basis_1d(p_, s_, eta, vy, dy);
  for (int b = 0; b <= n_; ++b)
    for (int a = 0; a <= n_; ++a)
    {
      const int m = a + (n_ + 1) * b;
      val[m] = vx[a] * vy[b];
      if (dxi)
        dxi[m] = dx[a] * vy[b];
      if (deta)
        deta[m] = vx[a] * dy[b];
    }
}

bool FESpace::same_nodes(const FESpace &other) const
{
  if (mesh_ != other.mesh_ || n_ != other.n_ || num_nodes() != other.num_nodes())
    return false;
  if (num_free_ != other.num_free_ || num_dirichlet_ != other.num_dirichlet_)
    return false;
  for (int i = 0; i < num_nodes(); ++i)
    if (class_[i] != other.class_[i] || node_dof_[i] != other.node_dof_[i])
      return false;
  return leaf_nodes_ == other.leaf_nodes_;
}

SpacePtr build_fe_space(std::shared_ptr<const ForestMesh> mesh, int k, BoundaryPredicate dirichlet)
{
  if (k < 1)
    throw InvalidInput("build_fe_space: order must be at least 1");
  return std::make_shared<const FESpace>(std::move(mesh), k, 1, std::move(dirichlet));
}

SpacePtr build_test_space(const SpacePtr &trial)
{
  if (trial->subdivisions() != 1)
    throw InvalidInput("build_test_space: trial space must be unsubdivided");
  const int k = trial->degree();
  if (k == 1)
    return trial;
  auto test = std::make_shared<const FESpace>(trial->mesh_ptr(), 1, k, trial->dirichlet_predicate());
  if (!test->same_nodes(*trial))
    throw InvariantViolation("test space does not match the trial space node-for-node (" +
                             std::to_string(test->num_dofs()) + " vs " +
                             std::to_string(trial->num_dofs()) + " dofs)");
  return test;
}

// ---------------------------------------------------------------------------
// FEFunction

FEFunction::FEFunction(SpacePtr space, Vector dofs) : space_(std::move(space)), dofs_(std::move(dofs))
{
  if (dofs_.size() != space_->num_dofs())
    throw InvalidInput("FEFunction: dof vector has the wrong length");
}

void FEFunction::local_values(int leaf, double *out) const
{
  const auto nodes = space_->leaf_nodes(leaf);
  for (std::size_t m = 0; m < nodes.size(); ++m)
  {
    double v = 0.0;
    for (const auto &e : space_->node_expansion(nodes[m]))
      v += e.coef * dofs_[e.dof];
    out[m] = v;
  }
}

void FEFunction::eval(int leaf, std::span<const Point> points, std::span<double> values,
                      std::span<Point> grads) const
{
  if (values.size() < points.size() || (!grads.empty() && grads.size() < points.size()))
    throw InvalidInput("FEFunction::eval: output span too small");
  const Leaf &l = space_->mesh().leaf(leaf);
  const int npl = space_->nodes_per_leaf();
  std::vector<double> u(npl), v(npl), dx(npl), dy(npl);
  local_values(leaf, u.data());
  constexpr double tol = 1e-10;
  for (std::size_t i = 0; i < points.size(); ++i)
  {
    const double xi = (points[i].x() - l.x0) / l.hx;
    const double eta = (points[i].y() - l.y0) / l.hy;
    if (xi < -tol || xi > 1 + tol || eta < -tol || eta > 1 + tol)
      throw InvalidInput("FEFunction::eval: point outside the leaf");
    space_->reference_basis(xi, eta, v.data(), dx.data(), dy.data());
    double val = 0.0, gx = 0.0, gy = 0.0;
    for (int m = 0; m < npl; ++m)
    {
      val += v[m] * u[m];
      gx += dx[m] * u[m];
      gy += dy[m] * u[m];
    }
    values[i] = val;
    if (!grads.empty())
      grads[i] = Point(gx / l.hx, gy / l.hy);
  }
}

FEFunction interpolate(const SpacePtr &space, const ScalarField &g)
{
  Vector d(space->num_dofs());
  for (int i = 0; i < space->num_dofs(); ++i)
    d[i] = g(space->dof_point(i));
  return FEFunction(space, std::move(d));
}

FEFunction lift_dirichlet(const SpacePtr &space, const ScalarField &g)
{
  Vector d = Vector::Zero(space->num_dofs());
  for (int i = space->num_free(); i < space->num_dofs(); ++i)
    d[i] = g(space->dof_point(i));
  return FEFunction(space, std::move(d));
}

FEFunction combine(const Vector &free_values, const FEFunction &lifting)
{
  const int nf = lifting.space().num_free();
  if (free_values.size() != nf)
    throw InvalidInput("combine: free vector has the wrong length");
  Vector d = lifting.dofs();
  d.head(nf) = free_values;
  return FEFunction(lifting.space_ptr(), std::move(d));
}

double continuity_defect(const FEFunction &f, int samples_per_face, unsigned seed)
{
  const ForestMesh &m = f.space().mesh();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double scale = std::max(1.0, f.dofs().size() ? f.dofs().cwiseAbs().maxCoeff() : 0.0);
  double worst = 0.0;
  std::vector<Point> pts(samples_per_face);
  std::vector<double> a(samples_per_face), b(samples_per_face);
  for (int id = 0; id < m.num_leaves(); ++id)
  {
    const auto nbs = m.face_neighbors(id);
    for (const auto &nb : nbs)
    {
      if (nb.kind != NeighborKind::same_level && nb.kind != NeighborKind::coarser)
        continue;
      for (auto &p : pts)
        p = nb.a + unif(rng) * (nb.b - nb.a);
      f.eval(id, pts, a);
      f.eval(nb.ids[0], pts, b);
      for (int i = 0; i < samples_per_face; ++i)
        worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
    }
  }
  return worst;
}

void write_solution(std::ostream &os, const FEFunction &f, int density)
{
  if (density < 1)
    throw InvalidInput("write_solution: density must be positive");
  const ForestMesh &m = f.space().mesh();
  const auto prec = os.precision(17);
  os << "# x y value\n";
  std::vector<Point> pts;
  std::vector<double> vals;
  for (int id = 0; id < m.num_leaves(); ++id)
  {
    const Leaf &l = m.leaf(id);
    pts.clear();
    for (int j = 0; j <= density; ++j)
      for (int i = 0; i <= density; ++i)
        pts.push_back(l.to_physical(static_cast<double>(i) / density, static_cast<double>(j) / density));
    vals.resize(pts.size());
    f.eval(id, pts, vals);
    for (std::size_t i = 0; i < pts.size(); ++i)
      os << pts[i].x() << ' ' << pts[i].y() << ' ' << vals[i] << '\n';
  }
  os.precision(prec);
}

}  // namespace feinn
