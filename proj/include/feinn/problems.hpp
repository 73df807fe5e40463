#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "feinn/assembly.hpp"
#include "feinn/jet.hpp"
#include "feinn/mesh.hpp"
#include "feinn/training.hpp"

namespace feinn
{

/// -Laplace(u) = f with u = g on the whole boundary.
struct Problem
{
  std::string name;
  std::shared_ptr<const CoarseMesh> coarse;
  int initial_refinement = 0;
  ScalarField u;
  VectorField grad_u;
  ScalarField f;
  std::function<Jet(const Jet &, const Jet &)> u_jet;
  std::vector<int> arch;
  Schedule schedule;

  ExactSolution exact() const { return {u, grad_u}; }
  std::shared_ptr<const ForestMesh> initial_mesh() const { return initial_mesh(initial_refinement); }
  std::shared_ptr<const ForestMesh> initial_mesh(int levels) const;
};

/// atan(100 (|x - c| - 0.7)) with c = (-0.05, -0.05) on the unit square.
Problem arc_wavefront();

/// r^{2/3} sin(2/3 (theta + pi/2)) on [-1,1]^2 \ [-1,0]^2; harmonic, f = 0.
Problem fichera_lshape();

/// x^k + y^k (+ x^{k-1} y^{k-1} for k >= 3) on the unit square; exactly representable at order k.
Problem poly_smoke(int k);

/// poly_smoke(k) + sin(pi x) sin(pi y): smooth but not representable.
Problem poly_sine(int k);

/// Registry lookup; `k` parametrizes the polynomial problems.
Problem problem_by_name(const std::string &name, int k = 2);
std::vector<std::string> problem_names();

/// Largest |f + Laplace(u)| / max(1, |f|) over random interior points, with
/// the Laplacian taken from the jet of u. Throws when it exceeds 1e-6.
double verify_problem(const Problem &problem, int samples = 100, unsigned seed = 11);

struct Interval
{
  double lo = -1.0;
  double hi = 1.0;
};

/// Two-neuron tanh network tanh(m (tanh(m x + m/4) + tanh(-m x + m/4))),
/// with the interval mapped affinely onto [-1, 1].
std::function<double(double)> tanh_hat_emulation(double m, Interval interval = {});

}  // namespace feinn
