// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "smoe/kernels.hpp"
#include "smoe/matrix.hpp"
#include "smoe/random.hpp"

namespace smoe {
namespace {

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Matrix m = Matrix::from_rows({{1.5, -2.0}, {0.25, 7.0}});
  EXPECT_EQ(kernel::matmul(Matrix::identity(2), m), m);
}

TEST(Matmul, HandComputedProduct) {
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  const Matrix b = Matrix::from_rows({{5}, {6}});
  EXPECT_EQ(kernel::matmul(a, b), Matrix::from_rows({{17}, {39}}));
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  try {
    kernel::matmul(Matrix(2, 3), Matrix(2, 3));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
  }
}

TEST(Matmul, TransposedVariantsAgreeWithExplicitTranspose) {
  Rng rng(3);
  const Matrix a = uniform_sample(4, 3, 1.0, rng), b = uniform_sample(4, 5, 1.0, rng);
  EXPECT_LT(max_abs_diff(kernel::matmul_tn(a, b), kernel::matmul(a.transposed(), b)), 1e-14);
  const Matrix c = uniform_sample(5, 3, 1.0, rng);
  EXPECT_LT(max_abs_diff(kernel::matmul_nt(a, c), kernel::matmul(a, c.transposed())), 1e-14);
}

TEST(Softmax, UniformRow) {
  const Matrix s = kernel::softmax_rows(Matrix(1, 3));
  for (double v : s.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, NegativeInfinityIsExactlyZero) {
  const Matrix s = kernel::softmax_rows(Matrix::from_rows({{kNegInf, 0.0}}));
  EXPECT_EQ(s[0], 0.0);
  EXPECT_EQ(s[1], 1.0);
}

TEST(Softmax, MatchesDirectEvaluation) {
  const Matrix s = kernel::softmax_rows(Matrix::from_rows({{1, 2, 3}}));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(s[i], std::exp(i + 1.0) / z, 1e-12);
}

TEST(Softmax, AllNegativeInfinityRowThrows) {
  EXPECT_THROW(kernel::softmax_rows(Matrix::from_rows({{kNegInf, kNegInf}})), std::domain_error);
}

TEST(Softmax, RowsAreDistributionsForLargeInputs) {
  Rng rng(5);
  Matrix m = uniform_sample(20, 7, 2.0, rng);
  m(3, 2) = 800.0;  // would overflow without max subtraction
  const Matrix s = kernel::softmax_rows(m);
  for (std::size_t r = 0; r < s.rows(); ++r) {
    double total = 0.0;
    for (double v : s.row(r)) {
      EXPECT_GE(v, 0.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Softplus, KnownValues) {
  EXPECT_NEAR(kernel::softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(kernel::softplus(50.0), 50.0, 1e-9);
  const long double ref = std::log1p(std::exp(static_cast<long double>(-3.0)));
  EXPECT_NEAR(kernel::softplus(-3.0), static_cast<double>(ref), 1e-12);
}

TEST(Softplus, PositiveAndMonotone) {
  double prev = 0.0;
  for (double x = -40.0; x <= 40.0; x += 0.37) {
    const double y = kernel::softplus(x);
    EXPECT_GT(y, 0.0);
    EXPECT_GE(y, prev);
    prev = y;
  }
}

// Composite Simpson integration of the standard normal density from -12.
double cdf_by_quadrature(double x) {
  const int n = 20000;
  const double a = -12.0, h = (x - a) / n;
  double s = kernel::std_normal_pdf(a) + kernel::std_normal_pdf(x);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * kernel::std_normal_pdf(a + i * h);
  return s * h / 3.0;
}

TEST(NormalCdf, KnownValuesAndSymmetry) {
  EXPECT_DOUBLE_EQ(kernel::std_normal_cdf(0.0), 0.5);
  EXPECT_NEAR(kernel::std_normal_cdf(1.0), 0.8413447460685429, 1e-12);
  for (double x : {0.1, 0.7, 1.9, 3.3, 6.0})
    EXPECT_NEAR(kernel::std_normal_cdf(x) + kernel::std_normal_cdf(-x), 1.0, 1e-15);
}

TEST(NormalCdf, MatchesQuadratureOnMinus8To8) {
  for (double x = -8.0; x <= 8.0; x += 0.25)
    EXPECT_NEAR(kernel::std_normal_cdf(x), cdf_by_quadrature(x), 1e-10) << "x = " << x;
}

TEST(Elementwise, Definitions) {
  const Matrix r = kernel::relu(Matrix::from_rows({{-1, 0, 2}}));
  EXPECT_EQ(r, Matrix::from_rows({{0, 0, 2}}));
  EXPECT_EQ(kernel::sigmoid(0.0), 0.5);
  EXPECT_NEAR(kernel::sigmoid(-800.0), 0.0, 1e-300);
  EXPECT_EQ(kernel::sigmoid(800.0), 1.0);
}

TEST(Elementwise, BinaryOpsRejectShapeMismatch) {
  EXPECT_THROW(kernel::add(Matrix(2, 2), Matrix(2, 3)), ShapeError);
  EXPECT_THROW(kernel::hadamard(Matrix(1, 2), Matrix(2, 1)), ShapeError);
}

TEST(CvSquared, PopulationDefinitionAndDegenerateCases) {
  const double v[] = {1.0, 2.0, 3.0, 6.0};
  // mean 3, population variance 3.5
  EXPECT_NEAR(kernel::cv_squared(v), 3.5 / 9.0, 1e-15);
  const double one[] = {4.0};
  EXPECT_EQ(kernel::cv_squared(one), 0.0);
  const std::size_t before = kernel::cv_zero_mean_warnings();
  const double zeros[] = {0.0, 0.0, 0.0};
  EXPECT_EQ(kernel::cv_squared(zeros), 0.0);
  EXPECT_EQ(kernel::cv_zero_mean_warnings(), before + 1);
}

TEST(GaussianSample, DeterministicPerSeed) {
  EXPECT_EQ(gaussian_sample(3, 4, 42), gaussian_sample(3, 4, 42));
  EXPECT_NE(gaussian_sample(3, 4, 42), gaussian_sample(3, 4, 43));
}

TEST(GaussianSample, MomentsOverAMillionDraws) {
  const Matrix m = gaussian_sample(1000, 1000, 7);
  double mean = 0.0;
  for (double v : m.data()) mean += v;
  mean /= static_cast<double>(m.size());
  double var = 0.0;
  for (double v : m.data()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(m.size());
  EXPECT_LT(std::abs(mean), 0.005);
  EXPECT_LT(std::abs(std::sqrt(var) - 1.0), 0.005);
}

TEST(Rng, SplitDependsOnlyOnSeedAndStream) {
  Rng a(9), b(9);
  a.normal();  // consuming the parent must not change its children
  EXPECT_EQ(a.split(4).normal(), b.split(4).normal());
  EXPECT_NE(b.split(4).normal(), b.split(5).normal());
}

}  // namespace
}  // namespace smoe
