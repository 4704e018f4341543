// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

// Strictly balanced gating: gates are a mask applied to dense softmax gates
// and renormalized. During training the mask keeps the top m examples per
// expert across the batch; at inference a learned per-expert threshold
// stands in for the batch statistic.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "smoe/gating.hpp"
#include "smoe/matrix.hpp"
#include "smoe/tape.hpp"

namespace smoe {

struct ThresholdVector {
  Matrix values;  ///< 1 x n

  static ThresholdVector zeros(std::size_t n) { return {Matrix(1, n)}; }
  std::size_t size() const noexcept { return values.cols(); }
};

/// gates ⊙ mask, renormalized per row. Rows whose masked sum is zero come out
/// all-zero (the example is routed nowhere).
Var masked_gate(Var gates_dense, const Matrix& mask);

/// 1 where v_i is among the k largest (lower index wins ties), else 0.
std::vector<double> topk_mask(std::span<const double> v, std::size_t k);
Matrix topk_mask(const Matrix& g, std::size_t k);

/// m = floor(k·batch/n). A non-integral quotient bumps batchwise_floor_warnings().
std::size_t batchwise_capacity(std::size_t batch, std::size_t n, std::size_t k);
std::size_t batchwise_floor_warnings() noexcept;

/// Per column, 1 for the m largest entries (lower row index wins ties).
/// Throws std::invalid_argument when m exceeds the batch size.
Matrix batchwise_mask(const Matrix& g, std::size_t m);

/// 1 where x_i > T_i (strict).
std::vector<double> threshold_mask(std::span<const double> x, const ThresholdVector& t);
Matrix threshold_mask(const Matrix& g, const ThresholdVector& t);

struct ThresholdLoss {
  double loss = 0.0;
  Matrix grad;  ///< d loss / d T, 1 x n
};

/// Σ_j Σ_i (M_threshold − M_batchwise)_{j,i} (G_{j,i} − T_i). Differentiated
/// with respect to T only; G is treated as data.
ThresholdLoss threshold_loss(const Matrix& g, const ThresholdVector& t, std::size_t m);

/// One plain gradient-descent step on T. Returns the loss before the step.
double threshold_step(ThresholdVector& t, const Matrix& g, std::size_t m, double lr);

/// Fraction of entries on which two 0/1 masks agree.
double mask_agreement(const Matrix& a, const Matrix& b);

/// Training-time gating: softmax gates masked by batchwise_mask(., m).
GateResult batchwise_gate(Var x, const GatingParams& params, ParamBinder& bind, std::size_t m);

/// Inference-time gating: softmax gates masked by threshold_mask(., t).
GateResult threshold_gate(Var x, const GatingParams& params, ParamBinder& bind,
                          const ThresholdVector& t);

}  // namespace smoe
