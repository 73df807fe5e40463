#include "feinn/assembly.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "feinn/quadrature.hpp"

namespace feinn
{

namespace
{

/// Basis values and reference derivatives of a space at the points of a rule.
struct RefTable
{
  QuadRule rule;
  int npl = 0;
  Eigen::MatrixXd val, dxi, deta;  // npl x num_points

  RefTable(const FESpace &space, QuadRule r) : rule(std::move(r)), npl(space.nodes_per_leaf())
  {
    const int nq = static_cast<int>(rule.points.size());
    val.resize(npl, nq);
    dxi.resize(npl, nq);
    deta.resize(npl, nq);
    for (int q = 0; q < nq; ++q)
      space.reference_basis(rule.points[q].x(), rule.points[q].y(), val.col(q).data(),
                            dxi.col(q).data(), deta.col(q).data());
  }
};

enum class Kernel
{
  stiffness,
  mass
};

struct Assembled
{
  SparseMat A;
  Vector rhs;
};

Assembled assemble_impl(const FESpace &trial, const FESpace &test, Kernel kernel,
                        const ScalarField *f, const Vector *lifting, std::span<const int> order)
{
  if (&trial.mesh() != &test.mesh())
    throw InvalidInput("assemble: trial and test spaces live on different meshes");
  if (trial.lattice() != test.lattice())
    throw InvalidInput("assemble: trial and test lattices differ");
  const int S = std::max(trial.subdivisions(), test.subdivisions());
  if (S % trial.subdivisions() != 0 || S % test.subdivisions() != 0)
    throw InvalidInput("assemble: incompatible subdivisions");
  const int q = std::max(trial.degree(), test.degree()) + 1;
  const QuadRule rule = subdivided_gauss(kernel == Kernel::mass ? q + 1 : q, S);
  const RefTable tu(trial, rule), tv(test, rule);
  const Eigen::RowVectorXd w = Eigen::Map<const Eigen::RowVectorXd>(rule.weights.data(), rule.weights.size());

  // Reference matrices (rows test, cols trial) on the unit square.
  Eigen::MatrixXd kxx, kyy, mass;
  if (kernel == Kernel::stiffness)
  {
    kxx = (tv.dxi.array().rowwise() * w.array()).matrix() * tu.dxi.transpose();
    kyy = (tv.deta.array().rowwise() * w.array()).matrix() * tu.deta.transpose();
  }
  else
    mass = (tv.val.array().rowwise() * w.array()).matrix() * tu.val.transpose();
  if (&trial == &test)
  {
    // Exact symmetry, so that B - B^T vanishes entry by entry.
    if (kernel == Kernel::stiffness)
    {
      kxx = 0.5 * (kxx + kxx.transpose()).eval();
      kyy = 0.5 * (kyy + kyy.transpose()).eval();
    }
    else
      mass = 0.5 * (mass + mass.transpose()).eval();
  }

  const ForestMesh &mesh = trial.mesh();
  std::vector<int> leaves(order.begin(), order.end());
  if (leaves.empty())
  {
    leaves.resize(mesh.num_leaves());
    std::iota(leaves.begin(), leaves.end(), 0);
  }
  else if (static_cast<int>(leaves.size()) != mesh.num_leaves())
    throw InvalidInput("assemble: leaf order has the wrong length");

  const int nft = test.num_free();
  const int nfu = trial.num_free();
  std::vector<Triplet> trips;
  std::vector<Triplet> rhs_parts;  // col unused
  const int npl_u = trial.nodes_per_leaf();
  const int npl_v = test.nodes_per_leaf();
  Eigen::MatrixXd aloc;
  Eigen::VectorXd floc(npl_v), uloc(npl_u);
  std::vector<double> fq(rule.points.size());

  for (int id : leaves)
  {
    const Leaf &l = mesh.leaf(id);
    if (kernel == Kernel::stiffness)
      aloc = (l.hy / l.hx) * kxx + (l.hx / l.hy) * kyy;
    else
      aloc = (l.hx * l.hy) * mass;

    floc.setZero();
    if (f)
    {
      for (std::size_t k = 0; k < rule.points.size(); ++k)
        fq[k] = rule.weights[k] * (*f)(l.to_physical(rule.points[k].x(), rule.points[k].y()));
      floc = (l.hx * l.hy) * (tv.val * Eigen::Map<const Eigen::VectorXd>(fq.data(), fq.size()));
    }
    if (lifting)
    {
      const auto nodes = trial.leaf_nodes(id);
      for (int m = 0; m < npl_u; ++m)
      {
        double v = 0.0;
        for (const auto &e : trial.node_expansion(nodes[m]))
          v += e.coef * (*lifting)[e.dof];
        uloc[m] = v;
      }
      floc.noalias() -= aloc * uloc;
    }

    const auto vnodes = test.leaf_nodes(id);
    const auto unodes = trial.leaf_nodes(id);
    for (int i = 0; i < npl_v; ++i)
    {
      const auto ei = test.node_expansion(vnodes[i]);
      for (const auto &a : ei)
      {
        if (a.dof >= nft)
          continue;
        if (floc[i] != 0.0)
          rhs_parts.push_back({a.dof, 0, a.coef * floc[i]});
        for (int j = 0; j < npl_u; ++j)
        {
          const double kij = aloc(i, j);
          if (kij == 0.0)
            continue;
          for (const auto &b : trial.node_expansion(unodes[j]))
            if (b.dof < nfu)
              trips.push_back({a.dof, b.dof, a.coef * b.coef * kij});
        }
      }
    }
  }

  Assembled out;
  out.A = SparseMat::from_triplets(nft, nfu, std::move(trips));
  std::sort(rhs_parts.begin(), rhs_parts.end(), [](const Triplet &a, const Triplet &b) {
    return a.row != b.row ? a.row < b.row : a.value < b.value;
  });
  out.rhs = Vector::Zero(nft);
  for (const auto &t : rhs_parts)
    out.rhs[t.row] += t.value;
  return out;
}

}  // namespace

LinearSystem assemble_system(const FESpace &trial, const FESpace &test, const ScalarField &f,
                             const FEFunction &lifting, std::span<const int> leaf_order)
{
  if (&lifting.space() != &trial)
    throw InvalidInput("assemble_system: lifting must live on the trial space");
  auto a = assemble_impl(trial, test, Kernel::stiffness, f ? &f : nullptr, &lifting.dofs(), leaf_order);
  return {std::move(a.A), std::move(a.rhs)};
}

SparseMat assemble_gram(const FESpace &test)
{
  return assemble_impl(test, test, Kernel::stiffness, nullptr, nullptr, {}).A;
}

SparseMat assemble_mass(const FESpace &space)
{
  return assemble_impl(space, space, Kernel::mass, nullptr, nullptr, {}).A;
}

NormKind parse_norm(const std::string &name)
{
  if (name == "L1")
    return NormKind::L1;
  if (name == "L2")
    return NormKind::L2;
  if (name == "W11")
    return NormKind::W11;
  if (name == "W12")
    return NormKind::W12;
  throw InvalidInput("unknown norm '" + name + "' (expected L1, L2, W11 or W12)");
}

std::string to_string(NormKind kind)
{
  switch (kind)
  {
  case NormKind::L1:
    return "L1";
  case NormKind::L2:
    return "L2";
  case NormKind::W11:
    return "W11";
  case NormKind::W12:
    return "W12";
  }
  return "?";
}

double integrate_norm(const FEFunction &f, NormKind which)
{
  const FESpace &space = f.space();
  const RefTable t(space, subdivided_gauss(space.degree() + 2, space.subdivisions()));
  const ForestMesh &mesh = space.mesh();
  Eigen::VectorXd u(space.nodes_per_leaf());
  double acc = 0.0;
  for (int id = 0; id < mesh.num_leaves(); ++id)
  {
    const Leaf &l = mesh.leaf(id);
    f.local_values(id, u.data());
    const Eigen::RowVectorXd v = u.transpose() * t.val;
    const Eigen::RowVectorXd gx = (u.transpose() * t.dxi) / l.hx;
    const Eigen::RowVectorXd gy = (u.transpose() * t.deta) / l.hy;
    double leaf_sum = 0.0;
    for (Eigen::Index q = 0; q < v.size(); ++q)
    {
      double integrand = 0.0;
      switch (which)
      {
      case NormKind::L1:
        integrand = std::abs(v[q]);
        break;
      case NormKind::L2:
        integrand = v[q] * v[q];
        break;
      case NormKind::W11:
        integrand = std::sqrt(gx[q] * gx[q] + gy[q] * gy[q]);
        break;
      case NormKind::W12:
        integrand = gx[q] * gx[q] + gy[q] * gy[q];
        break;
      }
      leaf_sum += t.rule.weights[q] * integrand;
    }
    acc += l.area() * leaf_sum;
  }
  return (which == NormKind::L2 || which == NormKind::W12) ? std::sqrt(acc) : acc;
}

ErrorNorms error_norms(const BatchField &identified, const ForestMesh &mesh, int k,
                       const ExactSolution &exact)
{
  const QuadRule rule = tensor_gauss(k + 3);
  const std::size_t nq = rule.points.size();
  std::vector<Point> pts(nq), grads(nq);
  std::vector<double> vals(nq);
  double l2 = 0.0, semi = 0.0;
  for (int id = 0; id < mesh.num_leaves(); ++id)
  {
    const Leaf &l = mesh.leaf(id);
    for (std::size_t q = 0; q < nq; ++q)
      pts[q] = l.to_physical(rule.points[q].x(), rule.points[q].y());
    identified(pts, vals, grads);
    double a = 0.0, b = 0.0;
    for (std::size_t q = 0; q < nq; ++q)
    {
      const double e = exact.u(pts[q]) - vals[q];
      const Point ge = exact.grad(pts[q]) - grads[q];
      a += rule.weights[q] * e * e;
      b += rule.weights[q] * ge.squaredNorm();
    }
    l2 += l.area() * a;
    semi += l.area() * b;
  }
  return {std::sqrt(l2), std::sqrt(l2 + semi)};
}

ErrorNorms error_norms(const FEFunction &identified, const ExactSolution &exact)
{
  const FESpace &space = identified.space();
  const QuadRule rule = subdivided_gauss(space.degree() + 3, space.subdivisions());
  const std::size_t nq = rule.points.size();
  std::vector<Point> pts(nq), grads(nq);
  std::vector<double> vals(nq);
  double l2 = 0.0, semi = 0.0;
  const ForestMesh &mesh = space.mesh();
  for (int id = 0; id < mesh.num_leaves(); ++id)
  {
    const Leaf &l = mesh.leaf(id);
    for (std::size_t q = 0; q < nq; ++q)
      pts[q] = l.to_physical(rule.points[q].x(), rule.points[q].y());
    identified.eval(id, pts, vals, grads);
    double a = 0.0, b = 0.0;
    for (std::size_t q = 0; q < nq; ++q)
    {
      const double e = exact.u(pts[q]) - vals[q];
      const Point ge = exact.grad(pts[q]) - grads[q];
      a += rule.weights[q] * e * e;
      b += rule.weights[q] * ge.squaredNorm();
    }
    l2 += l.area() * a;
    semi += l.area() * b;
  }
  return {std::sqrt(l2), std::sqrt(l2 + semi)};
}

std::vector<double> leaf_l2_errors(const FEFunction &f, const ScalarField &u)
{
  const FESpace &space = f.space();
  const QuadRule rule = subdivided_gauss(space.degree() + 3, space.subdivisions());
  const std::size_t nq = rule.points.size();
  std::vector<Point> pts(nq);
  std::vector<double> vals(nq);
  const ForestMesh &mesh = space.mesh();
  std::vector<double> out(mesh.num_leaves());
  for (int id = 0; id < mesh.num_leaves(); ++id)
  {
    const Leaf &l = mesh.leaf(id);
    for (std::size_t q = 0; q < nq; ++q)
      pts[q] = l.to_physical(rule.points[q].x(), rule.points[q].y());
    f.eval(id, pts, vals);
    double a = 0.0;
    for (std::size_t q = 0; q < nq; ++q)
    {
      const double e = vals[q] - u(pts[q]);
      a += rule.weights[q] * e * e;
    }
    out[id] = std::sqrt(l.area() * a);
  }
  return out;
}

}  // namespace feinn
