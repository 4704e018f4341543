// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

// Value-level dense kernels. The differentiable counterparts in ops.hpp are
// thin wrappers that add backward rules on top of these.

#pragma once

#include <limits>
#include <span>
#include <vector>

#include "smoe/matrix.hpp"

namespace smoe {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

namespace kernel {

Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ · b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a · bᵀ
Matrix matmul_nt(const Matrix& a, const Matrix& b);

/// Row-wise softmax with max subtraction. -inf entries map to exactly 0.
/// Throws std::domain_error for a row whose entries are all -inf.
Matrix softmax_rows(const Matrix& m);

double softplus(double x) noexcept;
Matrix softplus(const Matrix& m);
double sigmoid(double x) noexcept;

double std_normal_cdf(double x) noexcept;
double std_normal_pdf(double x) noexcept;

Matrix relu(const Matrix& m);
Matrix sigmoid(const Matrix& m);
Matrix tanh(const Matrix& m);

Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);

/// 1 x cols vector of column sums.
Matrix col_sums(const Matrix& m);

/// Population coefficient of variation squared over all entries.
/// Zero for constant, length-1 and all-zero inputs.
double cv_squared(std::span<const double> v);

/// Number of times cv_squared has been asked for a zero-mean vector.
std::size_t cv_zero_mean_warnings() noexcept;

}  // namespace kernel
}  // namespace smoe
