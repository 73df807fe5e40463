#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "feinn/assembly.hpp"
#include "feinn/neural.hpp"

namespace feinn
{

enum class LossMode
{
  discrete_l1,
  preconditioned
};

struct LossConfig
{
  LossMode mode = LossMode::discrete_l1;
  /// Only used in preconditioned mode.
  NormKind norm = NormKind::W11;
};

LossMode parse_loss_mode(const std::string &name);
std::string to_string(LossMode mode);

/// A loss as a function of the free trial dof vector u.
class ResidualLoss
{
public:
  virtual ~ResidualLoss() = default;
  /// Loss value; fills dL/du when grad_u is non-null.
  virtual double evaluate(const Vector &u, Vector *grad_u) const = 0;
};

/// || A u - f ||_1 with the subgradient sign(0) = 0.
class DiscreteL1Loss : public ResidualLoss
{
public:
  explicit DiscreteL1Loss(std::shared_ptr<const LinearSystem> sys) : sys_(std::move(sys)) {}
  double evaluate(const Vector &u, Vector *grad_u) const override;

private:
  std::shared_ptr<const LinearSystem> sys_;
};

/// || r_h ||_X where B r = A u - f and B is the test-space stiffness matrix.
class PreconditionedLoss : public ResidualLoss
{
public:
  PreconditionedLoss(std::shared_ptr<const LinearSystem> sys, SpacePtr test,
                     std::shared_ptr<const SpdFactor> gram, NormKind norm);
  double evaluate(const Vector &u, Vector *grad_u) const override;

  /// Coefficients of r_h on the free test dofs.
  Vector riesz(const Vector &u) const;

private:
  std::shared_ptr<const LinearSystem> sys_;
  SpacePtr test_;
  std::shared_ptr<const SpdFactor> gram_;
  NormKind norm_;
  // Test basis at the norm quadrature points (same rule as integrate_norm).
  std::vector<double> weights_;
  Eigen::MatrixXd val_, dxi_, deta_;
};

/// Everything needed to train a network on one mesh.
struct FeinnSetup
{
  SpacePtr trial;
  SpacePtr test;
  FEFunction lifting;
  std::shared_ptr<const LinearSystem> sys;
  std::shared_ptr<const SpdFactor> gram;  // preconditioned mode only
  Points free_points;
  std::shared_ptr<const ResidualLoss> loss;
  LossConfig config;
};

FeinnSetup make_setup(std::shared_ptr<const ForestMesh> mesh, int k, const ScalarField &f,
                      const ScalarField &g, const LossConfig &config);

/// Network values at the free trial nodes.
Vector dof_vector(const Mlp &net, const FESpace &trial);

/// Loss of a network; fills the parameter gradient when requested.
double network_loss(const Mlp &net, const FeinnSetup &setup, Vector *grad_theta);

/// pi_h(u_N) on free dofs plus the Dirichlet lifting.
FEFunction interpolated_network(const Mlp &net, const FeinnSetup &setup);

// ---------------------------------------------------------------------------
// Optimizer

using Objective = std::function<double(const Vector &theta, Vector &grad)>;

struct LbfgsOptions
{
  int max_iters = 100;
  int memory = 30;
  double grad_tol = 1e-12;
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_line_search = 30;
  /// Dense inverse-Hessian BFGS; only allowed below 2000 parameters.
  bool dense = false;
  /// Called after every accepted step with (iteration, theta, loss, gradient inf-norm).
  std::function<void(int, const Vector &, double, double)> on_iteration;
};

struct TrainReport
{
  int iterations = 0;
  /// Entry 0 is the initial point, entry i the state after accepted step i.
  std::vector<double> loss_trace;
  std::vector<double> grad_norm_trace;
  Vector theta;
  int line_search_failures = 0;
  int evaluations = 0;
};

TrainReport lbfgs_minimize(const Objective &objective, Vector theta0, const LbfgsOptions &options);

/// Trains `net` in place and returns the report.
TrainReport train(Mlp &net, const FeinnSetup &setup, const LbfgsOptions &options);

void write_trace_csv(std::ostream &os, const TrainReport &report);

// ---------------------------------------------------------------------------
// Last-layer solve

struct LastLayerReport
{
  double residual_before = 0.0;  // || A u - f ||_2
  double residual_after = 0.0;
  int iterations = 0;
  bool regularized = false;
  bool accepted = false;
};

/// Replaces (W_L, b_L) by the least-squares minimizer of || A (Phi w) - f ||_2
/// with the hidden layers fixed. Never increases the residual.
LastLayerReport last_layer_solve(Mlp &net, const FeinnSetup &setup);

// ---------------------------------------------------------------------------
// Iteration schedule

struct Schedule
{
  std::vector<int> milestones;
  std::vector<int> iters;
};

/// Band value for a dof count: the band index is the number of milestones below dofs.
int iteration_schedule(int dofs, const Schedule &schedule);

/// Schedule value with the preconditioned-run reduction (factor 4, factor 2 on the final step).
int scheduled_iterations(int dofs, const Schedule &schedule, bool preconditioned, bool final_step);

}  // namespace feinn
