// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

// Two additive attention scores between a source vector x and a target
// vector y:
//   gnmt:      Σ_d V_d tanh((xU)_d + (yW)_d)
//   factored:  Σ_d V_d tanh((xU)_d) tanh((yW)_d)
// Only the factored form separates into per-source and per-target terms, so
// only it can score every (source, target) pair with matrix products.

#pragma once

#include <cstddef>
#include <span>

#include "smoe/matrix.hpp"
#include "smoe/tape.hpp"

namespace smoe {

struct AttentionParams {
  Matrix u;  ///< src_dim x n_att
  Matrix w;  ///< tgt_dim x n_att
  Matrix v;  ///< 1 x n_att

  std::size_t attention_dim() const noexcept { return u.cols(); }
  void validate() const;
};

struct AttentionOpCount {
  std::size_t projection_matmuls = 0;  ///< XU and YW
  std::size_t score_products = 0;      ///< (tanh(XU)·diag(V)) · tanh(YW)ᵀ
  std::size_t scalar_evaluations = 0;  ///< per-pair score evaluations
};

double attention_gnmt(std::span<const double> x, std::span<const double> y,
                      const AttentionParams& p);
double attention_factored(std::span<const double> x, std::span<const double> y,
                          const AttentionParams& p);

/// S x T scores for X (S x src_dim) against Y (T x tgt_dim).
Matrix attention_factored_batched(const Matrix& x, const Matrix& y, const AttentionParams& p,
                                  AttentionOpCount* count = nullptr);

/// S x T scores by evaluating attention_factored on every pair.
Matrix attention_factored_pairwise(const Matrix& x, const Matrix& y, const AttentionParams& p,
                                   AttentionOpCount* count = nullptr);

// Differentiable forms. x and y are row vectors, v is 1 x n_att.
Var attention_gnmt(Var x, Var y, Var u, Var w, Var v);
Var attention_factored(Var x, Var y, Var u, Var w, Var v);
Var attention_factored_batched(Var x, Var y, Var u, Var w, Var v);

}  // namespace smoe
