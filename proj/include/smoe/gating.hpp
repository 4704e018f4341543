// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "smoe/matrix.hpp"
#include "smoe/random.hpp"
#include "smoe/tape.hpp"

namespace smoe {

/// Trainable gating network: clean logits x·w_gate and, when noisy, a
/// per-expert noise scale softplus(x·w_noise).
struct GatingParams {
  Matrix w_gate;   ///< input_dim x n
  Matrix w_noise;  ///< input_dim x n
  std::size_t k = 1;
  bool noisy = true;

  /// Zero-initialized weights: uniform gates with unit-ish noise.
  static GatingParams zeros(std::size_t input_dim, std::size_t num_experts, std::size_t k,
                            bool noisy = true);

  std::size_t input_dim() const noexcept { return w_gate.rows(); }
  std::size_t num_experts() const noexcept { return w_gate.cols(); }
  void validate() const;
};

struct GateResult {
  Var gates;         ///< batch x n, exactly k nonzeros per row
  Var clean_logits;  ///< x · w_gate
  Var noisy_logits;  ///< H(x); same node as clean_logits when noise is off
  Var noise_stddev;  ///< softplus(x · w_noise); invalid when noise is off
  Matrix noise;      ///< standard normal draws used for H(x); empty when off
  std::vector<std::vector<std::size_t>> topk_indices;  ///< per row, by descending H
  std::size_t k = 0;

  bool has_noise() const noexcept { return noise_stddev.valid(); }
  std::size_t batch() const noexcept { return topk_indices.size(); }
  std::size_t num_experts() const { return gates.cols(); }
};

/// Indices of the k largest entries, largest first; ties go to the lower index.
std::vector<std::size_t> top_k_indices(std::span<const double> v, std::size_t k);

/// Keeps the k largest entries (lower index wins ties) and sets the rest to -inf.
std::vector<double> keep_top_k(std::span<const double> v, std::size_t k);

/// Row-wise keep_top_k on a tape variable. The selection is treated as a
/// constant; gradient flows to the surviving entries only.
Var keep_top_k(Var v, std::size_t k);

/// Dense softmax gating, softmax(x · w_gate).
Var softmax_gate(Var x, const GatingParams& params, ParamBinder& bind);

/// Noisy top-k gating with fresh noise drawn from `rng`. With `apply_noise`
/// false (or params.noisy false) the clean logits are used directly.
GateResult noisy_topk_gate(Var x, const GatingParams& params, ParamBinder& bind, Rng& rng,
                           bool apply_noise = true);

/// Same as above with caller-supplied standard normal draws (batch x n).
/// Used to hold the noise fixed, e.g. for finite-difference checks.
GateResult noisy_topk_gate(Var x, const GatingParams& params, ParamBinder& bind,
                           const Matrix& noise);

/// Noise-free top-k gating.
GateResult clean_topk_gate(Var x, const GatingParams& params, ParamBinder& bind);

}  // namespace smoe
