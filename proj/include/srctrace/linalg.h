// Copyright 2026 The srctrace Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SRCTRACE_LINALG_H_
#define SRCTRACE_LINALG_H_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace srctrace {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> diag);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
// aᵀ·b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a·bᵀ without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
// Rows of a followed by rows of b.
Matrix vstack(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& a);
double trace(const Matrix& a);
double max_abs(const Matrix& a);
double dot(std::span<const double> a, std::span<const double> b);
bool all_finite(const Matrix& a);
// Replaces a with (a + aᵀ)/2.
void symmetrize(Matrix& a);

// Gaussian moments of a set of row vectors.
struct MeanCov {
  std::vector<double> mean;
  Matrix cov;
  std::size_t n = 0;
};

// Column mean and unbiased (n-1) covariance, symmetrized. Requires >= 2 rows.
MeanCov estimate_moments(const Matrix& x);

struct SymEig {
  std::vector<double> values;  // ascending
  Matrix vectors;              // column j pairs with values[j]
};

// Cyclic Jacobi eigendecomposition of a symmetric matrix.
SymEig sym_eig(const Matrix& s);

// Symmetric square root of a PSD matrix. Small negative eigenvalues that pass
// the tolerance check are clamped to zero.
Matrix psd_sqrt(const Matrix& s);

// Tolerances are scaled by max(1, max|s_ij|).
inline constexpr double kSymmetryTolerance = 1e-9;
inline constexpr double kPsdTolerance = 1e-9;

}  // namespace srctrace

#endif  // SRCTRACE_LINALG_H_
