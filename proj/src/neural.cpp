#include "feinn/neural.hpp"

#include <istream>
#include <ostream>
#include <random>
#include <sstream>

namespace feinn
{

namespace
{

/// W h + b for every column. Shared by all evaluation paths so their value
/// channels agree bit for bit.
Eigen::MatrixXd affine(const Eigen::MatrixXd &w, const Eigen::VectorXd &b, const Eigen::MatrixXd &h)
{
  Eigen::MatrixXd z = w * h;
  z.colwise() += b;
  return z;
}

Eigen::MatrixXd activate(const Eigen::MatrixXd &z)
{
  return z.array().tanh().matrix();
}

void check_input(const Mlp &net)
{
  if (net.num_layers() == 0)
    throw InvalidInput("network has no layers");
}

}  // namespace

Mlp::Mlp(std::vector<int> arch) : arch_(std::move(arch))
{
  if (arch_.size() < 2)
    throw InvalidInput("architecture needs at least an input and an output layer");
  if (arch_.front() != 2 || arch_.back() != 1)
    throw InvalidInput("architecture must map R^2 to R (n_0 = 2, n_L = 1)");
  for (int n : arch_)
    if (n < 1)
      throw InvalidInput("layer widths must be positive");
  for (std::size_t k = 1; k < arch_.size(); ++k)
  {
    weights_.push_back(Eigen::MatrixXd::Zero(arch_[k], arch_[k - 1]));
    biases_.push_back(Eigen::VectorXd::Zero(arch_[k]));
  }
}

int Mlp::num_params() const
{
  int n = 0;
  for (std::size_t k = 0; k < weights_.size(); ++k)
    n += static_cast<int>(weights_[k].size() + biases_[k].size());
  return n;
}

Vector Mlp::flatten() const
{
  Vector theta(num_params());
  Eigen::Index pos = 0;
  for (std::size_t k = 0; k < weights_.size(); ++k)
  {
    const auto &w = weights_[k];
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        theta[pos++] = w(i, j);
    theta.segment(pos, biases_[k].size()) = biases_[k];
    pos += biases_[k].size();
  }
  return theta;
}

void Mlp::unflatten(const Vector &theta)
{
  if (theta.size() != num_params())
    throw InvalidInput("unflatten: parameter vector has the wrong length");
  Eigen::Index pos = 0;
  for (std::size_t k = 0; k < weights_.size(); ++k)
  {
    auto &w = weights_[k];
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        w(i, j) = theta[pos++];
    biases_[k] = theta.segment(pos, biases_[k].size());
    pos += biases_[k].size();
  }
}

Mlp mlp_new(const std::vector<int> &arch, std::uint64_t seed)
{
  Mlp net(arch);
  std::mt19937_64 rng(seed);
  for (int k = 0; k < net.num_layers(); ++k)
  {
    auto &w = net.weight(k);
    const double a = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> dist(-a, a);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        w(i, j) = dist(rng);
  }
  return net;
}

Points to_points(std::span<const Point> pts)
{
  Points x(2, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i)
    x.col(static_cast<Eigen::Index>(i)) = pts[i];
  return x;
}

Eigen::RowVectorXd forward(const Mlp &net, const Points &x)
{
  check_input(net);
  Eigen::MatrixXd h = x;
  const int L = net.num_layers();
  for (int k = 0; k < L - 1; ++k)
    h = activate(affine(net.weight(k), net.bias(k), h));
  return affine(net.weight(L - 1), net.bias(L - 1), h);
}

Vector vjp(const Mlp &net, const Points &x, const Eigen::RowVectorXd &cot)
{
  check_input(net);
  if (cot.size() != x.cols())
    throw InvalidInput("vjp: cotangent length must equal the batch size");
  const int L = net.num_layers();
  std::vector<Eigen::MatrixXd> h(L);
  h[0] = x;
  for (int k = 0; k < L - 1; ++k)
    h[k + 1] = activate(affine(net.weight(k), net.bias(k), h[k]));

  std::vector<Eigen::MatrixXd> gw(L);
  std::vector<Eigen::VectorXd> gb(L);
  Eigen::MatrixXd delta = cot;  // d loss / d z_k, n_k x N
  for (int k = L - 1; k >= 0; --k)
  {
    gw[k] = delta * h[k].transpose();
    gb[k] = delta.rowwise().sum();
    if (k > 0)
    {
      Eigen::MatrixXd back = net.weight(k).transpose() * delta;
      delta = (back.array() * (1.0 - h[k].array().square())).matrix();
    }
  }

  Vector g(net.num_params());
  Eigen::Index pos = 0;
  for (int k = 0; k < L; ++k)
  {
    for (Eigen::Index i = 0; i < gw[k].rows(); ++i)
      for (Eigen::Index j = 0; j < gw[k].cols(); ++j)
        g[pos++] = gw[k](i, j);
    g.segment(pos, gb[k].size()) = gb[k];
    pos += gb[k].size();
  }
  return g;
}

SpatialDerivs spatial_derivs(const Mlp &net, const Points &x)
{
  check_input(net);
  const Eigen::Index n = x.cols();
  Eigen::MatrixXd h = x;
  Eigen::MatrixXd hx = Eigen::MatrixXd::Zero(2, n), hy = Eigen::MatrixXd::Zero(2, n);
  Eigen::MatrixXd hl = Eigen::MatrixXd::Zero(2, n);
  hx.row(0).setOnes();
  hy.row(1).setOnes();
  const int L = net.num_layers();
  for (int k = 0; k < L; ++k)
  {
    const auto &w = net.weight(k);
    Eigen::MatrixXd z = affine(w, net.bias(k), h);
    Eigen::MatrixXd zx = w * hx, zy = w * hy, zl = w * hl;
    if (k == L - 1)
    {
      h = std::move(z);
      hx = std::move(zx);
      hy = std::move(zy);
      hl = std::move(zl);
      break;
    }
    h = activate(z);
    const Eigen::ArrayXXd d1 = 1.0 - h.array().square();
    const Eigen::ArrayXXd d2 = -2.0 * h.array() * d1;
    hl = (d2 * (zx.array().square() + zy.array().square()) + d1 * zl.array()).matrix();
    hx = (d1 * zx.array()).matrix();
    hy = (d1 * zy.array()).matrix();
  }
  return {h, hx, hy, hl};
}

Eigen::MatrixXd last_layer_features(const Mlp &net, const Points &x)
{
  check_input(net);
  Eigen::MatrixXd h = x;
  for (int k = 0; k < net.num_layers() - 1; ++k)
    h = activate(affine(net.weight(k), net.bias(k), h));
  return h;
}

void save_checkpoint(std::ostream &os, const Mlp &net)
{
  os << "feinn-mlp 1\narch";
  for (int n : net.arch())
    os << ' ' << n;
  const Vector theta = net.flatten();
  os << "\nparams " << theta.size() << '\n';
  const auto prec = os.precision(17);
  for (Eigen::Index i = 0; i < theta.size(); ++i)
    os << theta[i] << '\n';
  os.precision(prec);
}

Mlp load_checkpoint(std::istream &is)
{
  std::string magic, word, line;
  int version = 0;
  if (!(is >> magic >> version) || magic != "feinn-mlp" || version != 1)
    throw InvalidInput("not a version-1 network checkpoint");
  if (!(is >> word) || word != "arch")
    throw InvalidInput("checkpoint: missing arch line");
  std::getline(is, line);
  std::istringstream ls(line);
  std::vector<int> arch;
  for (int n; ls >> n;)
    arch.push_back(n);
  Mlp net(arch);
  long count = 0;
  if (!(is >> word >> count) || word != "params" || count != net.num_params())
    throw InvalidInput("checkpoint: parameter count does not match the architecture");
  Vector theta(count);
  for (long i = 0; i < count; ++i)
    if (!(is >> theta[i]))
      throw InvalidInput("checkpoint: truncated parameter list");
  net.unflatten(theta);
  return net;
}

}  // namespace feinn
