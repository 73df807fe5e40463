#pragma once

#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "feinn/problems.hpp"
#include "feinn/training.hpp"

namespace feinn
{

enum class IndicatorKind
{
  kelly,
  network,
  real
};

IndicatorKind parse_indicator(const std::string &name);
std::string to_string(IndicatorKind kind);

/// sqrt(sum over interior faces of c_F \int_F [[du/dn]]^2), c_F = h_K / 24.
/// On a face with two finer neighbors the integral runs over both subfaces.
std::vector<double> kelly_indicator(const FEFunction &total);

/// sqrt(\int_K (Laplace(u_N) + f)^2) with an 8-point Gauss rule per direction.
std::vector<double> network_indicator(const Mlp &net, const ForestMesh &mesh, const ScalarField &f);

/// sqrt(\int_K (total - u)^2).
std::vector<double> real_indicator(const FEFunction &total, const ScalarField &u);

struct Marking
{
  std::vector<int> refine;
  std::vector<int> coarsen;
};

/// ceil(delta * n), robust against delta * n landing a rounding error above an integer.
int fraction_count(double delta, int n);

/// Fixed-fraction marking: ranks by value (descending, ties by smaller id first),
/// refines the top ceil(dr n) and coarsens the bottom ceil(dc n) not already refined.
Marking mark(std::span<const double> indicator, double delta_r, double delta_c);

struct StepRecord
{
  int step = 0;
  int leaves = 0;
  int dofs = 0;
  int iters = 0;
  double loss = std::numeric_limits<double>::quiet_NaN();
  double feinn_l2 = std::numeric_limits<double>::quiet_NaN();
  double feinn_h1 = std::numeric_limits<double>::quiet_NaN();
  double nn_l2 = std::numeric_limits<double>::quiet_NaN();
  double nn_h1 = std::numeric_limits<double>::quiet_NaN();
  int max_level = 0;
};

struct AdaptHistory
{
  std::vector<StepRecord> steps;
};

/// `step,leaves,dofs,iters,loss,feinn_l2,feinn_h1,nn_l2,nn_h1`.
void write_history_csv(std::ostream &os, const AdaptHistory &history);

struct AdaptConfig
{
  double delta_r = 0.15;
  double delta_c = 0.01;
  /// Number of adaptations; steps 0..max_steps are trained or solved.
  int max_steps = 7;
  IndicatorKind indicator = IndicatorKind::kelly;
  int order = 4;
  LossConfig loss;
  Schedule schedule;
  /// When positive, replaces the schedule.
  int fixed_iters = 0;
  LbfgsOptions optimizer;
  /// Run last_layer_solve before training at every step.
  bool last_layer = false;

  std::function<void(int step, const ForestMesh &)> on_mesh;
  std::function<void(const ForestMesh &before, const Marking &, const ForestMesh &after)> on_marking;
  std::function<void(int step, const FEFunction &)> on_solution;
  std::function<void(int step, const Mlp &, const TrainReport &)> on_train;

  void validate() const;
};

struct FeinnResult
{
  Mlp net;
  std::shared_ptr<const ForestMesh> mesh;
  AdaptHistory history;
};

/// Train / estimate / mark / adapt, warm-starting the network between steps.
/// Uses the problem's initial mesh when `initial` is null.
FeinnResult adaptive_feinn(const Problem &problem, Mlp net, const AdaptConfig &config,
                           std::shared_ptr<const ForestMesh> initial = nullptr);

/// Galerkin (SPD solve) or Petrov-Galerkin with the linearized test space (cgnr).
FEFunction fem_solve(const Problem &problem, std::shared_ptr<const ForestMesh> mesh, int k, bool petrov);

struct FemResult
{
  std::vector<FEFunction> solutions;
  std::shared_ptr<const ForestMesh> mesh;
  AdaptHistory history;
};

/// Same loop as adaptive_feinn with training replaced by a Galerkin solve.
/// The indicator must be kelly or real.
FemResult adaptive_fem(const Problem &problem, const AdaptConfig &config,
                       std::shared_ptr<const ForestMesh> initial = nullptr);

/// Galerkin solves on uniform refinements `first..last` of the coarse mesh.
FemResult uniform_fem(const Problem &problem, int k, int first, int last);

}  // namespace feinn
