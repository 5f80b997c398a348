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

#include "srctrace/linalg.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "srctrace/error.h"

namespace srctrace {
namespace {

constexpr int kMaxJacobiSweeps = 100;
constexpr double kJacobiTolerance = 1e-12;

void require_square(const Matrix& s, const char* what) {
  if (s.rows() != s.cols()) {
    throw ShapeError(std::string(what) + ": expected a square matrix, got " +
                     std::to_string(s.rows()) + "x" + std::to_string(s.cols()));
  }
}

void require_symmetric(const Matrix& s, const char* what) {
  const double scale = std::max(1.0, max_abs(s));
  for (std::size_t i = 0; i < s.rows(); ++i) {
    for (std::size_t j = i + 1; j < s.cols(); ++j) {
      if (std::abs(s(i, j) - s(j, i)) > kSymmetryTolerance * scale) {
        throw NotPsdError(std::string(what) + ": matrix is not symmetric at (" +
                          std::to_string(i) + "," + std::to_string(j) + ")");
      }
    }
  }
}

double off_diagonal_norm(const Matrix& a) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (i != j) sum += a(i, j) * a(i, j);
    }
  }
  return std::sqrt(sum);
}

}  // namespace

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
  Matrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t cols = rows.size() == 0 ? 0 : rows.begin()->size();
  Matrix m(rows.size(), cols);
  std::size_t r = 0;
  for (const auto& row : rows) {
    if (row.size() != cols) throw ShapeError("from_rows: ragged rows");
    std::copy(row.begin(), row.end(), m.row(r++).begin());
  }
  return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                     " vs " + std::to_string(b.rows()) + ")");
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: row counts differ");
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const auto a_row = a.row(k);
    const auto b_row = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a_row[i];
      if (aki == 0.0) continue;
      auto out_row = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aki * b_row[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: column counts differ");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
  }
  return out;
}

Matrix vstack(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("vstack: column counts differ");
  Matrix out(a.rows() + b.rows(), a.cols());
  std::copy(a.values().begin(), a.values().end(), out.values().begin());
  std::copy(b.values().begin(), b.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(a.values().size()));
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  }
  return t;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("subtract: shapes differ");
  }
  Matrix out = a;
  auto out_values = out.values();
  const auto b_values = b.values();
  for (std::size_t i = 0; i < out_values.size(); ++i) out_values[i] -= b_values[i];
  return out;
}

double frobenius_norm(const Matrix& a) {
  double sum = 0.0;
  for (double v : a.values()) sum += v * v;
  return std::sqrt(sum);
}

double trace(const Matrix& a) {
  require_square(a, "trace");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) sum += a(i, i);
  return sum;
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

bool all_finite(const Matrix& a) {
  return std::all_of(a.values().begin(), a.values().end(),
                     [](double v) { return std::isfinite(v); });
}

void symmetrize(Matrix& a) {
  require_square(a, "symmetrize");
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = i + 1; j < a.cols(); ++j) {
      const double v = 0.5 * (a(i, j) + a(j, i));
      a(i, j) = v;
      a(j, i) = v;
    }
  }
}

MeanCov estimate_moments(const Matrix& x) {
  if (x.rows() < 2 || x.cols() < 1) {
    throw DegenerateInputError("estimate_moments: need at least 2 rows and 1 column, got " +
                               std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
  }
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  MeanCov out;
  out.n = n;
  out.mean.assign(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = x.row(r);
    for (std::size_t j = 0; j < d; ++j) out.mean[j] += row[j];
  }
  for (double& m : out.mean) m /= static_cast<double>(n);

  Matrix centered(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) centered(r, j) = x(r, j) - out.mean[j];
  }
  out.cov = matmul_tn(centered, centered);
  const double denom = static_cast<double>(n - 1);
  for (double& v : out.cov.values()) v /= denom;
  symmetrize(out.cov);
  return out;
}

SymEig sym_eig(const Matrix& s) {
  require_square(s, "sym_eig");
  require_symmetric(s, "sym_eig");
  const std::size_t n = s.rows();
  Matrix a = s;
  symmetrize(a);
  Matrix v = Matrix::identity(n);

  const double norm = frobenius_norm(a);
  for (int sweep = 0; sweep < kMaxJacobiSweeps; ++sweep) {
    if (norm == 0.0 || off_diagonal_norm(a) < kJacobiTolerance * norm) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // Rotation that annihilates a(p,q); t is the smaller root of
        // t^2 + 2 theta t - 1 = 0.
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - sn * vkq;
          v(k, q) = sn * vkp + c * vkq;
        }
      }
    }
  }
  if (off_diagonal_norm(a) >= kJacobiTolerance * norm && norm != 0.0) {
    throw NumericalError("sym_eig: Jacobi iteration did not converge");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&a](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });
  SymEig out;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = a(order[j], order[j]);
    for (std::size_t k = 0; k < n; ++k) out.vectors(k, j) = v(k, order[j]);
  }
  return out;
}

Matrix psd_sqrt(const Matrix& s) {
  require_square(s, "psd_sqrt");
  const SymEig eig = sym_eig(s);
  const std::size_t n = s.rows();
  const double floor = -kPsdTolerance * std::max(1.0, max_abs(s));
  std::vector<double> roots(n);
  for (std::size_t j = 0; j < n; ++j) {
    if (eig.values[j] < floor) {
      throw NotPsdError("psd_sqrt: eigenvalue " + std::to_string(eig.values[j]) +
                        " is below the PSD tolerance");
    }
    roots[j] = std::sqrt(std::max(eig.values[j], 0.0));
  }
  // R = V diag(roots) Vᵀ
  Matrix scaled = eig.vectors;
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < n; ++j) scaled(k, j) *= roots[j];
  }
  Matrix r = matmul_nt(scaled, eig.vectors);
  symmetrize(r);
  return r;
}

}  // namespace srctrace
