#pragma once

#include <span>

#include "feinn/linalg.hpp"
#include "feinn/space.hpp"

namespace feinn
{

/// Petrov-Galerkin Poisson system on free dofs: rows are test dofs, columns trial dofs.
struct LinearSystem
{
  SparseMat A;
  /// \int f psi_i - a(lifting, psi_i) for every free test dof.
  Vector rhs;
};

/// Assembles a(u, v) = \int grad u . grad v and the load vector. When
/// `leaf_order` is non-empty it gives the order in which leaves are visited;
/// the result is identical for every order.
LinearSystem assemble_system(const FESpace &trial, const FESpace &test, const ScalarField &f,
                             const FEFunction &lifting, std::span<const int> leaf_order = {});

/// Stiffness matrix of the test space on its free dofs.
SparseMat assemble_gram(const FESpace &test);

/// Mass matrix on free dofs (used by tests and the L2 preconditioned loss checks).
SparseMat assemble_mass(const FESpace &space);

enum class NormKind
{
  L1,
  L2,
  W11,
  W12
};

NormKind parse_norm(const std::string &name);
std::string to_string(NormKind kind);

/// L1 = \int |f|, L2 = (\int f^2)^1/2, W11 = \int |grad f|, W12 = (\int |grad f|^2)^1/2.
double integrate_norm(const FEFunction &f, NormKind which);

struct ExactSolution
{
  ScalarField u;
  VectorField grad;
};

/// Evaluates values and gradients at a batch of points.
using BatchField = std::function<void(std::span<const Point>, std::span<double>, std::span<Point>)>;

struct ErrorNorms
{
  double l2 = 0.0;
  double h1 = 0.0;
};

/// L2 and full H1 errors using q = k+3 Gauss points per direction on every leaf.
ErrorNorms error_norms(const BatchField &identified, const ForestMesh &mesh, int k,
                       const ExactSolution &exact);
ErrorNorms error_norms(const FEFunction &identified, const ExactSolution &exact);

/// Per-leaf L2 norm of (f - u) with q = k+3 (k the degree of f's space).
std::vector<double> leaf_l2_errors(const FEFunction &f, const ScalarField &u);

}  // namespace feinn
