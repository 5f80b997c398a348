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

#include "gtest/gtest.h"
#include "srctrace/error.h"
#include "test_util.h"

namespace srctrace {
namespace {

using testing_util::random_matrix;
using testing_util::random_psd;
using testing_util::relative_frobenius;

TEST(EstimateMoments, TwoPoints) {
  const MeanCov mc = estimate_moments(Matrix::from_rows({{0, 0}, {2, 2}}));
  EXPECT_EQ(mc.n, 2u);
  EXPECT_DOUBLE_EQ(mc.mean[0], 1.0);
  EXPECT_DOUBLE_EQ(mc.mean[1], 1.0);
  EXPECT_EQ(mc.cov, Matrix::from_rows({{2, 2}, {2, 2}}));
}

TEST(EstimateMoments, ConstantRowsHaveZeroCovariance) {
  Matrix x(7, 3);
  for (std::size_t i = 0; i < 7; ++i) {
    x(i, 0) = 1.5;
    x(i, 1) = -2.0;
    x(i, 2) = 0.25;
  }
  const MeanCov mc = estimate_moments(x);
  EXPECT_DOUBLE_EQ(mc.mean[0], 1.5);
  EXPECT_DOUBLE_EQ(mc.mean[1], -2.0);
  EXPECT_EQ(mc.cov, Matrix(3, 3));
}

TEST(EstimateMoments, UnbiasedVariance) {
  const MeanCov mc = estimate_moments(Matrix::from_rows({{0}, {1}, {2}}));
  EXPECT_DOUBLE_EQ(mc.mean[0], 1.0);
  EXPECT_DOUBLE_EQ(mc.cov(0, 0), 1.0);
}

TEST(EstimateMoments, SingleRowIsDegenerate) {
  EXPECT_THROW(estimate_moments(Matrix::from_rows({{1, 2}})), DegenerateInputError);
}

TEST(EstimateMoments, PermutationInvariantAndSymmetric) {
  Rng rng(11);
  const Matrix x = random_matrix(rng, 40, 6);
  std::vector<std::size_t> order(40);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  Matrix shuffled(40, 6);
  for (std::size_t i = 0; i < 40; ++i) {
    for (std::size_t j = 0; j < 6; ++j) shuffled(i, j) = x(order[i], j);
  }
  const MeanCov a = estimate_moments(x);
  const MeanCov b = estimate_moments(shuffled);
  for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(a.mean[j], b.mean[j], 1e-10 * std::max(1.0, std::abs(a.mean[j])));
  EXPECT_LT(relative_frobenius(b.cov, a.cov), 1e-10);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(a.cov(i, j), a.cov(j, i));
  }
}

TEST(SymEig, Diagonal) {
  const SymEig e = sym_eig(Matrix::from_rows({{3, 0}, {0, 1}}));
  EXPECT_DOUBLE_EQ(e.values[0], 1.0);
  EXPECT_DOUBLE_EQ(e.values[1], 3.0);
}

TEST(SymEig, TwoByTwoOffDiagonal) {
  const SymEig e = sym_eig(Matrix::from_rows({{0, 1}, {1, 0}}));
  EXPECT_NEAR(e.values[0], -1.0, 1e-14);
  EXPECT_NEAR(e.values[1], 1.0, 1e-14);
}

TEST(SymEig, Identity) {
  const SymEig e = sym_eig(Matrix::identity(5));
  for (double v : e.values) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(SymEig, NonSquareIsShapeError) { EXPECT_THROW(sym_eig(Matrix(2, 3)), ShapeError); }

TEST(SymEig, ReconstructionAndOrthonormality) {
  Rng rng(5);
  for (std::size_t d : {1u, 2u, 7u, 16u, 60u}) {
    Matrix sym = random_matrix(rng, d, d);
    symmetrize(sym);
    const SymEig e = sym_eig(sym);
    EXPECT_TRUE(std::is_sorted(e.values.begin(), e.values.end()));
    const Matrix rebuilt = matmul(matmul(e.vectors, Matrix::diagonal(e.values)), transpose(e.vectors));
    EXPECT_LT(relative_frobenius(rebuilt, sym), 1e-8) << "d=" << d;
    EXPECT_LT(frobenius_norm(subtract(matmul_tn(e.vectors, e.vectors), Matrix::identity(d))), 1e-8) << "d=" << d;
  }
}

TEST(PsdSqrt, IdentityAndDiagonal) {
  EXPECT_LT(relative_frobenius(psd_sqrt(Matrix::identity(4)), Matrix::identity(4)), 1e-15);
  const Matrix r = psd_sqrt(Matrix::from_rows({{4, 0}, {0, 9}}));
  EXPECT_NEAR(r(0, 0), 2.0, 1e-15);
  EXPECT_NEAR(r(1, 1), 3.0, 1e-15);
  EXPECT_EQ(r(0, 1), 0.0);
}

TEST(PsdSqrt, SquaresBack) {
  Rng rng(17);
  for (std::size_t d : {1u, 2u, 16u, 144u}) {
    const Matrix s = random_psd(rng, d);
    const Matrix r = psd_sqrt(s);
    EXPECT_LT(relative_frobenius(matmul(r, r), s), 1e-8) << "d=" << d;
    EXPECT_LT(max_abs(subtract(r, transpose(r))), 1e-12);
  }
}

TEST(PsdSqrt, RankDeficient) {
  Rng rng(3);
  const Matrix s = random_psd(rng, 12, 4);
  const Matrix r = psd_sqrt(s);
  EXPECT_LT(relative_frobenius(matmul(r, r), s), 1e-8);
}

TEST(PsdSqrt, ClampsTinyNegativeEigenvalues) {
  const Matrix s = Matrix::from_rows({{1, 0}, {0, -1e-12}});
  const Matrix r = psd_sqrt(s);
  EXPECT_DOUBLE_EQ(r(0, 0), 1.0);
  EXPECT_EQ(r(1, 1), 0.0);
}

TEST(PsdSqrt, RejectsNegativeDefinite) {
  EXPECT_THROW(psd_sqrt(Matrix::from_rows({{1, 0}, {0, -1e-3}})), NotPsdError);
}

TEST(PsdSqrt, RejectsAsymmetric) {
  EXPECT_THROW(psd_sqrt(Matrix::from_rows({{1, 0.5}, {0, 1}})), NotPsdError);
}

TEST(Matrix, RowMajorAccess) {
  Matrix m = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_EQ(m.values()[4], 5.0);
  EXPECT_EQ(m.row(1)[2], 6.0);
  EXPECT_EQ(transpose(m)(2, 1), 6.0);
  EXPECT_EQ(vstack(m, m).rows(), 4u);
}

}  // namespace
}  // namespace srctrace
