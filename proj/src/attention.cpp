// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "smoe/attention.hpp"

#include <cmath>
#include <string>

#include "smoe/kernels.hpp"
#include "smoe/ops.hpp"

namespace smoe {
namespace {

// (x·M)_d for a row vector x.
double project(std::span<const double> x, const Matrix& m, std::size_t d) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * m(i, d);
  return acc;
}

void check_inputs(std::size_t x_dim, std::size_t y_dim, const AttentionParams& p) {
  p.validate();
  if (x_dim != p.u.rows() || y_dim != p.w.rows()) {
    throw ShapeError("attention: inputs of width " + std::to_string(x_dim) + " and " +
                     std::to_string(y_dim) + " do not match U " + p.u.shape_str() + " and W " +
                     p.w.shape_str());
  }
}

}  // namespace

void AttentionParams::validate() const {
  if (u.cols() != w.cols() || v.rows() != 1 || v.cols() != u.cols()) {
    throw ShapeError("AttentionParams: U " + u.shape_str() + ", W " + w.shape_str() + ", V " +
                     v.shape_str());
  }
}

double attention_gnmt(std::span<const double> x, std::span<const double> y,
                      const AttentionParams& p) {
  check_inputs(x.size(), y.size(), p);
  double score = 0.0;
  for (std::size_t d = 0; d < p.attention_dim(); ++d)
    score += p.v[d] * std::tanh(project(x, p.u, d) + project(y, p.w, d));
  return score;
}

double attention_factored(std::span<const double> x, std::span<const double> y,
                          const AttentionParams& p) {
  check_inputs(x.size(), y.size(), p);
  double score = 0.0;
  for (std::size_t d = 0; d < p.attention_dim(); ++d)
    score += p.v[d] * std::tanh(project(x, p.u, d)) * std::tanh(project(y, p.w, d));
  return score;
}

Matrix attention_factored_batched(const Matrix& x, const Matrix& y, const AttentionParams& p,
                                  AttentionOpCount* count) {
  check_inputs(x.cols(), y.cols(), p);
  Matrix a = kernel::tanh(kernel::matmul(x, p.u));
  const Matrix b = kernel::tanh(kernel::matmul(y, p.w));
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto row = a.row(r);
    for (std::size_t d = 0; d < row.size(); ++d) row[d] *= p.v[d];
  }
  if (count) {
    count->projection_matmuls += 2;
    count->score_products += 1;
  }
  return kernel::matmul_nt(a, b);
}

Matrix attention_factored_pairwise(const Matrix& x, const Matrix& y, const AttentionParams& p,
                                   AttentionOpCount* count) {
  check_inputs(x.cols(), y.cols(), p);
  Matrix out(x.rows(), y.rows());
  for (std::size_t s = 0; s < x.rows(); ++s)
    for (std::size_t t = 0; t < y.rows(); ++t) out(s, t) = attention_factored(x.row(s), y.row(t), p);
  if (count) count->scalar_evaluations += x.rows() * y.rows();
  return out;
}

Var attention_gnmt(Var x, Var y, Var u, Var w, Var v) {
  return sum(mul(v, tanh(add(matmul(x, u), matmul(y, w)))));
}

Var attention_factored(Var x, Var y, Var u, Var w, Var v) {
  return sum(mul(mul(v, tanh(matmul(x, u))), tanh(matmul(y, w))));
}

Var attention_factored_batched(Var x, Var y, Var u, Var w, Var v) {
  return matmul(mul_row_broadcast(tanh(matmul(x, u)), v), transpose(tanh(matmul(y, w))));
}

}  // namespace smoe
