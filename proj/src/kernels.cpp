// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "smoe/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <string>

namespace smoe::kernel {
namespace {

std::atomic<std::size_t> g_cv_zero_mean{0};

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Matrix& m) { return ConstMap(m.data().data(), m.rows(), m.cols()); }
MutMap view(Matrix& m) { return MutMap(m.data().data(), m.rows(), m.cols()); }

template <class F>
Matrix map(const Matrix& m, F f) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = f(m[i]);
  return out;
}

void require_inner(std::size_t lhs, std::size_t rhs, const Matrix& a, const Matrix& b,
                   const char* what) {
  if (lhs != rhs) {
    throw ShapeError(std::string(what) + ": inner dimension mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  require_inner(a.cols(), b.rows(), a, b, "matmul");
  Matrix out(a.rows(), b.cols());
  if (a.cols() == 0) return out;
  view(out).noalias() = view(a) * view(b);
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require_inner(a.rows(), b.rows(), a, b, "matmul_tn");
  Matrix out(a.cols(), b.cols());
  if (a.rows() == 0) return out;
  view(out).noalias() = view(a).transpose() * view(b);
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require_inner(a.cols(), b.cols(), a, b, "matmul_nt");
  Matrix out(a.rows(), b.rows());
  if (a.cols() == 0) return out;
  view(out).noalias() = view(a) * view(b).transpose();
  return out;
}

Matrix softmax_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto in = m.row(r);
    auto dst = out.row(r);
    const double hi = in.empty() ? kNegInf : *std::max_element(in.begin(), in.end());
    if (!in.empty() && hi == kNegInf) {
      throw std::domain_error("softmax_rows: row " + std::to_string(r) + " is entirely -inf");
    }
    double total = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      dst[c] = in[c] == kNegInf ? 0.0 : std::exp(in[c] - hi);
      total += dst[c];
    }
    for (double& v : dst) v /= total;
  }
  return out;
}

double softplus(double x) noexcept { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

Matrix softplus(const Matrix& m) { return map(m, [](double x) { return softplus(x); }); }

double sigmoid(double x) noexcept {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double std_normal_cdf(double x) noexcept { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double std_normal_pdf(double x) noexcept {
  constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;
  return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

Matrix relu(const Matrix& m) { return map(m, [](double x) { return x > 0.0 ? x : 0.0; }); }
Matrix sigmoid(const Matrix& m) { return map(m, [](double x) { return sigmoid(x); }); }
Matrix tanh(const Matrix& m) { return map(m, [](double x) { return std::tanh(x); }); }

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "sub");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "mul");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Matrix scale(const Matrix& a, double s) { return map(a, [s](double x) { return x * s; }); }

Matrix col_sums(const Matrix& m) {
  Matrix out(1, m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) out[c] += row[c];
  }
  return out;
}

double cv_squared(std::span<const double> v) {
  if (v.size() <= 1) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (mean == 0.0) {
    g_cv_zero_mean.fetch_add(1, std::memory_order_relaxed);
    return 0.0;
  }
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  return var / (mean * mean);
}

std::size_t cv_zero_mean_warnings() noexcept { return g_cv_zero_mean.load(std::memory_order_relaxed); }

}  // namespace smoe::kernel
