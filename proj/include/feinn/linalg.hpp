#pragma once

#include <iosfwd>
#include <memory>
#include <vector>

#include "feinn/types.hpp"

namespace feinn
{

struct Triplet
{
  int row;
  int col;
  double value;
};

/// Compressed sparse row matrix. Column indices are strictly increasing per row.
class SparseMat
{
public:
  SparseMat() = default;
  SparseMat(int rows, int cols) : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

  /// Sums duplicate entries. The summation order within an entry is by
  /// increasing value, so the result does not depend on the triplet order.
  static SparseMat from_triplets(int rows, int cols, std::vector<Triplet> triplets);
  static SparseMat identity(int n);
  static SparseMat from_dense(const Eigen::MatrixXd &m);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int nnz() const { return static_cast<int>(val_.size()); }

  const std::vector<int> &row_ptr() const { return row_ptr_; }
  const std::vector<int> &col_idx() const { return col_; }
  const std::vector<double> &values() const { return val_; }

  /// Entry (i, j), zero when not stored.
  double at(int i, int j) const;
  Eigen::MatrixXd to_dense() const;
  SparseMat transpose() const;

private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<int> row_ptr_{0};
  std::vector<int> col_;
  std::vector<double> val_;
};

/// y = A x, or y = A^T x when `transpose` is set.
Vector spmv(bool transpose, const SparseMat &a, const Vector &x);

/// Sparse Cholesky factorization with a fill-reducing ordering.
class SpdFactor
{
public:
  explicit SpdFactor(const SparseMat &b);
  ~SpdFactor();
  SpdFactor(SpdFactor &&) noexcept;
  SpdFactor &operator=(SpdFactor &&) noexcept;

  int size() const { return n_; }
  Vector solve(const Vector &rhs) const;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int n_ = 0;
};

SpdFactor spd_factor(const SparseMat &b);
Vector spd_solve(const SpdFactor &f, const Vector &rhs);

struct CgnrReport
{
  Vector x;
  int iterations = 0;
  /// ||A^T (A x - b)|| / ||A^T b||.
  double rel_residual = 0.0;
  bool converged = false;
};

/// Least-squares solve of A x = b by conjugate gradients on the normal
/// equations (CGLS form, A^T A is never formed).
CgnrReport cgnr_solve(const SparseMat &a, const Vector &b, double tol = 1e-12, int maxit = 0,
                      const Vector *x0 = nullptr);

/// Coordinate text dump, one `i j value` line per stored entry.
void write_coordinate(std::ostream &os, const SparseMat &a);

}  // namespace feinn
