#include "feinn/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

namespace feinn
{

SparseMat SparseMat::from_triplets(int rows, int cols, std::vector<Triplet> t)
{
  for (const auto &e : t)
    if (e.row < 0 || e.row >= rows || e.col < 0 || e.col >= cols)
      throw InvalidInput("triplet index out of range");
  std::sort(t.begin(), t.end(), [](const Triplet &a, const Triplet &b) {
    if (a.row != b.row)
      return a.row < b.row;
    if (a.col != b.col)
      return a.col < b.col;
    return a.value < b.value;
  });

  SparseMat m(rows, cols);
  m.col_.reserve(t.size());
  m.val_.reserve(t.size());
  std::size_t i = 0;
  for (int r = 0; r < rows; ++r)
  {
    while (i < t.size() && t[i].row == r)
    {
      const int c = t[i].col;
      double sum = 0.0;
      for (; i < t.size() && t[i].row == r && t[i].col == c; ++i)
        sum += t[i].value;
      m.col_.push_back(c);
      m.val_.push_back(sum);
    }
    m.row_ptr_[r + 1] = static_cast<int>(m.col_.size());
  }
  return m;
}

SparseMat SparseMat::identity(int n)
{
  std::vector<Triplet> t;
  for (int i = 0; i < n; ++i)
    t.push_back({i, i, 1.0});
  return from_triplets(n, n, std::move(t));
}

SparseMat SparseMat::from_dense(const Eigen::MatrixXd &d)
{
  SparseMat m(static_cast<int>(d.rows()), static_cast<int>(d.cols()));
  for (int r = 0; r < m.rows_; ++r)
  {
    for (int c = 0; c < m.cols_; ++c)
      if (d(r, c) != 0.0)
      {
        m.col_.push_back(c);
        m.val_.push_back(d(r, c));
      }
    m.row_ptr_[r + 1] = static_cast<int>(m.col_.size());
  }
  return m;
}

double SparseMat::at(int i, int j) const
{
  const auto b = col_.begin() + row_ptr_.at(i);
  const auto e = col_.begin() + row_ptr_.at(i + 1);
  const auto it = std::lower_bound(b, e, j);
  return (it != e && *it == j) ? val_[it - col_.begin()] : 0.0;
}

Eigen::MatrixXd SparseMat::to_dense() const
{
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(rows_, cols_);
  for (int r = 0; r < rows_; ++r)
    for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
      d(r, col_[k]) = val_[k];
  return d;
}

SparseMat SparseMat::transpose() const
{
  SparseMat t(cols_, rows_);
  std::vector<int> count(cols_ + 1, 0);
  for (int c : col_)
    ++count[c + 1];
  for (int c = 0; c < cols_; ++c)
    count[c + 1] += count[c];
  t.row_ptr_ = count;
  t.col_.resize(col_.size());
  t.val_.resize(val_.size());
  for (int r = 0; r < rows_; ++r)
    for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
    {
      const int dst = count[col_[k]]++;
      t.col_[dst] = r;
      t.val_[dst] = val_[k];
    }
  return t;
}

Vector spmv(bool transpose, const SparseMat &a, const Vector &x)
{
  const auto &rp = a.row_ptr();
  const auto &ci = a.col_idx();
  const auto &v = a.values();
  if (!transpose)
  {
    if (x.size() != a.cols())
      throw InvalidInput("spmv: dimension mismatch");
    Vector y(a.rows());
    for (int r = 0; r < a.rows(); ++r)
    {
      double s = 0.0;
      for (int k = rp[r]; k < rp[r + 1]; ++k)
        s += v[k] * x[ci[k]];
      y[r] = s;
    }
    return y;
  }
  if (x.size() != a.rows())
    throw InvalidInput("spmv: dimension mismatch");
  Vector y = Vector::Zero(a.cols());
  for (int r = 0; r < a.rows(); ++r)
  {
    const double xr = x[r];
    for (int k = rp[r]; k < rp[r + 1]; ++k)
      y[ci[k]] += v[k] * xr;
  }
  return y;
}

// ---------------------------------------------------------------------------

struct SpdFactor::Impl
{
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>> llt;
};

SpdFactor::SpdFactor(const SparseMat &b) : impl_(std::make_unique<Impl>()), n_(b.rows())
{
  if (b.rows() != b.cols())
    throw InvalidInput("spd_factor: matrix is not square");
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(b.nnz());
  for (int r = 0; r < b.rows(); ++r)
    for (int k = b.row_ptr()[r]; k < b.row_ptr()[r + 1]; ++k)
      t.emplace_back(r, b.col_idx()[k], b.values()[k]);
  Eigen::SparseMatrix<double> m(b.rows(), b.cols());
  m.setFromTriplets(t.begin(), t.end());
  impl_->llt.compute(m);
  if (impl_->llt.info() != Eigen::Success)
    throw Error("spd_factor: matrix is not symmetric positive definite");
}

SpdFactor::~SpdFactor() = default;
SpdFactor::SpdFactor(SpdFactor &&) noexcept = default;
SpdFactor &SpdFactor::operator=(SpdFactor &&) noexcept = default;

Vector SpdFactor::solve(const Vector &rhs) const
{
  if (rhs.size() != n_)
    throw InvalidInput("spd_solve: dimension mismatch");
  if (n_ == 0)
    return Vector();
  Vector x = impl_->llt.solve(rhs);
  if (impl_->llt.info() != Eigen::Success)
    throw Error("spd_solve: back substitution failed");
  return x;
}

SpdFactor spd_factor(const SparseMat &b)
{
  return SpdFactor(b);
}

Vector spd_solve(const SpdFactor &f, const Vector &rhs)
{
  return f.solve(rhs);
}

// ---------------------------------------------------------------------------

CgnrReport cgnr_solve(const SparseMat &a, const Vector &b, double tol, int maxit, const Vector *x0)
{
  if (b.size() != a.rows())
    throw InvalidInput("cgnr_solve: dimension mismatch");
  if (maxit <= 0)
    maxit = std::max(100, 10 * a.cols());

  CgnrReport rep;
  rep.x = x0 ? *x0 : Vector::Zero(a.cols());
  if (rep.x.size() != a.cols())
    throw InvalidInput("cgnr_solve: initial guess has the wrong size");

  const double atb = spmv(true, a, b).norm();
  if (atb == 0.0 && !x0)
  {
    rep.converged = true;
    return rep;
  }
  const double scale = atb > 0.0 ? atb : 1.0;

  Vector r = b - spmv(false, a, rep.x);
  Vector s = spmv(true, a, r);
  Vector p = s;
  double gamma = s.squaredNorm();
  rep.rel_residual = std::sqrt(gamma) / scale;
  while (rep.rel_residual > tol && rep.iterations < maxit)
  {
    const Vector q = spmv(false, a, p);
    const double qq = q.squaredNorm();
    if (qq == 0.0)
      break;
    const double alpha = gamma / qq;
    rep.x += alpha * p;
    r -= alpha * q;
    s = spmv(true, a, r);
    const double gamma_new = s.squaredNorm();
    p = s + (gamma_new / gamma) * p;
    gamma = gamma_new;
    ++rep.iterations;
    rep.rel_residual = std::sqrt(gamma) / scale;
  }
  rep.converged = rep.rel_residual <= tol;
  return rep;
}

void write_coordinate(std::ostream &os, const SparseMat &a)
{
  const auto prec = os.precision(17);
  os << "% " << a.rows() << ' ' << a.cols() << ' ' << a.nnz() << '\n';
  for (int r = 0; r < a.rows(); ++r)
    for (int k = a.row_ptr()[r]; k < a.row_ptr()[r + 1]; ++k)
      os << r << ' ' << a.col_idx()[k] << ' ' << a.values()[k] << '\n';
  os.precision(prec);
}

}  // namespace feinn
