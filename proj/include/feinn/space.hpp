#pragma once

// Continuous Lagrange spaces on a ForestMesh.
//
// A space is described by a polynomial degree p and a per-leaf subdivision s:
// every leaf carries an (n+1) x (n+1) lattice of equispaced nodes with n = p*s,
// and the basis is piecewise tensor-product degree p on the s x s subcells.
// The order-k trial space is (k, 1); its linearized test space is (1, k), which
// has exactly the same node lattice.

#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "feinn/mesh.hpp"

namespace feinn
{

enum class DofClass
{
  free,
  dirichlet,
  hanging
};

/// One term of a node's expansion in global degrees of freedom.
struct Expansion
{
  int dof;
  double coef;
};

using BoundaryPredicate = std::function<bool(const Point &)>;

/// 1D piecewise-Lagrange lattice basis on [0,1]: n+1 functions, degree p on s segments.
void lattice_basis_1d(int p, int s, double t, double *val, double *der);

class FESpace
{
public:
  /// Use build_fe_space / build_test_space; `dirichlet` may be empty (all boundary nodes).
  FESpace(std::shared_ptr<const ForestMesh> mesh, int degree, int subdivisions,
          BoundaryPredicate dirichlet);

  const ForestMesh &mesh() const { return *mesh_; }
  const std::shared_ptr<const ForestMesh> &mesh_ptr() const { return mesh_; }
  int degree() const { return p_; }
  int subdivisions() const { return s_; }
  /// Lattice intervals per leaf edge (n = p*s).
  int lattice() const { return n_; }
  int nodes_per_leaf() const { return (n_ + 1) * (n_ + 1); }
  const BoundaryPredicate &dirichlet_predicate() const { return dirichlet_; }

  int num_nodes() const { return static_cast<int>(coords_.size()); }
  const Point &node(int i) const { return coords_[i]; }
  DofClass node_class(int i) const { return class_[i]; }
  bool on_boundary(int i) const { return boundary_[i] != 0; }
  /// Global dof of a free or Dirichlet node, -1 for hanging nodes.
  int node_dof(int i) const { return node_dof_[i]; }

  int num_free() const { return num_free_; }
  int num_dirichlet() const { return num_dirichlet_; }
  /// Free dofs are numbered [0, num_free), Dirichlet dofs follow.
  int num_dofs() const { return num_free_ + num_dirichlet_; }
  int num_hanging() const { return num_nodes() - num_dofs(); }
  int dof_node(int dof) const { return dof_node_[dof]; }
  const Point &dof_point(int dof) const { return coords_[dof_node_[dof]]; }
  bool is_free(int dof) const { return dof < num_free_; }

  /// Node ids of a leaf, lexicographic with local index a + (n+1) b.
  std::span<const int> leaf_nodes(int leaf) const
  {
    return {leaf_nodes_.data() + static_cast<std::size_t>(leaf) * nodes_per_leaf(),
            static_cast<std::size_t>(nodes_per_leaf())};
  }

  /// Expansion of a node in dofs: {dof, 1} for free/Dirichlet nodes, the
  /// resolved multi-point constraint for hanging nodes.
  std::span<const Expansion> node_expansion(int node) const
  {
    return {exp_.data() + exp_ptr_[node], static_cast<std::size_t>(exp_ptr_[node + 1] - exp_ptr_[node])};
  }

  /// All lattice basis functions of a leaf at reference point (xi, eta) in [0,1]^2.
  /// Derivatives are with respect to the reference coordinates.
  void reference_basis(double xi, double eta, double *val, double *dxi, double *deta) const;

  /// Same node lattice, same classification.
  bool same_nodes(const FESpace &other) const;

private:
  std::shared_ptr<const ForestMesh> mesh_;
  int p_, s_, n_;
  BoundaryPredicate dirichlet_;

  std::vector<Point> coords_;
  std::vector<DofClass> class_;
  std::vector<char> boundary_;
  std::vector<int> node_dof_;
  std::vector<int> dof_node_;
  std::vector<int> leaf_nodes_;
  std::vector<int> exp_ptr_;
  std::vector<Expansion> exp_;
  int num_free_ = 0;
  int num_dirichlet_ = 0;
};

using SpacePtr = std::shared_ptr<const FESpace>;

/// Order-k Lagrange space. An empty predicate makes every boundary node Dirichlet.
SpacePtr build_fe_space(std::shared_ptr<const ForestMesh> mesh, int k,
                        BoundaryPredicate dirichlet = {});

/// Piecewise-linear space on the k x k subdivision of every trial leaf.
/// Throws InvariantViolation unless its node set and classification match the trial space.
SpacePtr build_test_space(const SpacePtr &trial);

class FEFunction
{
public:
  FEFunction() = default;
  FEFunction(SpacePtr space, Vector dofs);

  const FESpace &space() const { return *space_; }
  const SpacePtr &space_ptr() const { return space_; }
  const Vector &dofs() const { return dofs_; }
  Vector &dofs() { return dofs_; }
  /// Values of the free dofs only.
  Vector free_dofs() const { return dofs_.head(space_->num_free()); }

  /// Values at the leaf's lattice nodes, hanging nodes expanded.
  void local_values(int leaf, double *out) const;

  /// Values (and optionally gradients) at physical points inside a leaf.
  void eval(int leaf, std::span<const Point> points, std::span<double> values,
            std::span<Point> grads = {}) const;

private:
  SpacePtr space_;
  Vector dofs_;
};

/// Sets every free and Dirichlet dof to g(node); hanging nodes follow from constraints.
FEFunction interpolate(const SpacePtr &space, const ScalarField &g);

/// Dirichlet dofs from g, free dofs zero.
FEFunction lift_dirichlet(const SpacePtr &space, const ScalarField &g);

/// Free dofs from `free_values`, Dirichlet dofs copied from `lifting`.
FEFunction combine(const Vector &free_values, const FEFunction &lifting);

/// Largest two-sided mismatch over random points on interior faces, relative
/// to max(1, max |dof|).
double continuity_defect(const FEFunction &f, int samples_per_face = 4, unsigned seed = 7);

/// `x y value` rows on a uniform (density+1)^2 grid per leaf.
void write_solution(std::ostream &os, const FEFunction &f, int density);

}  // namespace feinn
