#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fkg {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<const double> data() const noexcept { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Eigenvalues in ascending order; column j of `vectors` is the unit
/// eigenvector for values[j].
struct EigenDecomposition {
  std::vector<double> values;
  Matrix vectors;
};

/// Householder tridiagonalization followed by implicit-shift QL.
/// `a` must be symmetric; only that property is assumed, not checked.
EigenDecomposition symmetric_eigen(const Matrix& a);

/// Cyclic Jacobi rotations. Slower; kept as an independent route.
EigenDecomposition jacobi_eigen(const Matrix& a, int max_sweeps = 100);

}  // namespace fkg
