#pragma once

// Fully connected tanh networks R^2 -> R.
//
// Flat parameter order (public contract, used by the optimizer and checkpoints):
// layer by layer, the weight matrix W_k (n_k x n_{k-1}) in row-major order
// followed by its bias b_k.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "feinn/types.hpp"

namespace feinn
{

using Points = Eigen::Matrix2Xd;

class Mlp
{
public:
  Mlp() = default;
  /// All parameters zero. Requires arch.front() == 2 and arch.back() == 1.
  explicit Mlp(std::vector<int> arch);

  const std::vector<int> &arch() const { return arch_; }
  /// Number of affine layers L.
  int num_layers() const { return static_cast<int>(weights_.size()); }
  int num_params() const;

  Eigen::MatrixXd &weight(int k) { return weights_.at(k); }
  const Eigen::MatrixXd &weight(int k) const { return weights_.at(k); }
  Eigen::VectorXd &bias(int k) { return biases_.at(k); }
  const Eigen::VectorXd &bias(int k) const { return biases_.at(k); }

  Vector flatten() const;
  void unflatten(const Vector &theta);

private:
  std::vector<int> arch_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

/// Glorot-uniform weights, zero biases, deterministic in `seed`.
Mlp mlp_new(const std::vector<int> &arch, std::uint64_t seed);

Points to_points(std::span<const Point> pts);

/// Network output at every column of x.
Eigen::RowVectorXd forward(const Mlp &net, const Points &x);

/// sum_i cot_i * dN(x_i)/dtheta in flat parameter order.
Vector vjp(const Mlp &net, const Points &x, const Eigen::RowVectorXd &cot);

struct SpatialDerivs
{
  Eigen::RowVectorXd value, dx, dy, lap;
};

/// Value, gradient and Laplacian with respect to the input by second-order
/// forward propagation. `value` is bitwise equal to forward().
SpatialDerivs spatial_derivs(const Mlp &net, const Points &x);

/// Outputs of the last hidden layer (n_{L-1} x N); the network is
/// W_L * features + b_L.
Eigen::MatrixXd last_layer_features(const Mlp &net, const Points &x);

void save_checkpoint(std::ostream &os, const Mlp &net);
Mlp load_checkpoint(std::istream &is);

}  // namespace feinn
