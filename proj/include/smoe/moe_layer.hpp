// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "smoe/batchwise.hpp"
#include "smoe/gating.hpp"
#include "smoe/matrix.hpp"
#include "smoe/random.hpp"
#include "smoe/tape.hpp"

namespace smoe {

/// Feed-forward expert: relu(x · w1) · w2.
struct Expert {
  Matrix w1;  ///< input_dim x hidden_dim
  Matrix w2;  ///< hidden_dim x output_dim

  /// Weights uniform in ±sqrt(6 / (fan_in + fan_out)).
  static Expert init(std::size_t input_dim, std::size_t hidden_dim, std::size_t output_dim,
                     Rng& rng);

  std::size_t input_dim() const noexcept { return w1.rows(); }
  std::size_t hidden_dim() const noexcept { return w1.cols(); }
  std::size_t output_dim() const noexcept { return w2.cols(); }
  std::size_t parameter_count() const noexcept { return w1.size() + w2.size(); }
};

enum class GatingMode { kNoisyTopK, kBatchwise };

struct MoELayer {
  std::vector<Expert> experts;
  GatingParams gating;
  bool sigmoid_output = false;
  GatingMode mode = GatingMode::kNoisyTopK;
  ThresholdVector thresholds;  ///< inference-time masks for kBatchwise

  /// n experts of identical shape, zero-initialized gating.
  static MoELayer create(std::size_t input_dim, std::size_t hidden_dim, std::size_t output_dim,
                         std::size_t num_experts, std::size_t k, Rng& rng, bool noisy = true);

  std::size_t num_experts() const noexcept { return experts.size(); }
  std::size_t input_dim() const { return experts.front().input_dim(); }
  std::size_t hidden_dim() const { return experts.front().hidden_dim(); }
  std::size_t output_dim() const { return experts.front().output_dim(); }
  std::size_t expert_parameter_count() const;
  std::size_t gating_parameter_count() const noexcept {
    return gating.w_gate.size() + gating.w_noise.size();
  }
  void validate() const;
};

/// Examples routed to each expert.
struct DispatchPlan {
  std::vector<std::vector<std::size_t>> rows;   ///< per expert, ascending example index
  std::vector<std::vector<double>> gate_values;  ///< parallel to rows

  std::size_t total() const noexcept;
  std::size_t num_experts() const noexcept { return rows.size(); }
};

/// Groups the strictly positive gate entries by expert.
DispatchPlan build_dispatch(const Matrix& gates);
DispatchPlan build_dispatch(const GateResult& gates);

/// Per-expert input slices; invalid Var for experts with no rows.
std::vector<Var> dispatch(Var x, const DispatchPlan& plan);

/// Σ_i gates[:, i] ⊙ outputs[i] scattered back into batch rows, accumulated in
/// expert-index order. Experts with no rows may carry an invalid Var.
Var combine(std::span<const Var> expert_outputs, Var gates, const DispatchPlan& plan,
            std::size_t batch, std::size_t output_dim);

/// relu(x · w1) · w2 as one tape node. With `recompute` the hidden activations
/// are rebuilt during backward instead of being kept alive on the tape.
Var expert_forward(const Expert& e, Var x, ParamBinder& bind, bool recompute = false);

struct MoEForwardOptions {
  bool train = true;
  /// Inject gating noise. Defaults to on for training; evaluation turns it off.
  bool noise = true;
  bool recompute_activations = false;
  /// When set, used instead of fresh noise (batch x n standard normals).
  const Matrix* frozen_noise = nullptr;
};

struct MoEOutput {
  Var y;  ///< batch x output_dim
  GateResult gates;
  DispatchPlan plan;
  std::size_t expert_row_evals = 0;
};

/// y_j = Σ_{i selected for j} G(x_j)_i · E_i(x_j). Experts with no routed
/// examples are never evaluated and add no tape nodes.
MoEOutput moe_forward(const MoELayer& layer, Var x, ParamBinder& bind, Rng& rng,
                      const MoEForwardOptions& opts = {});

/// Gates for `layer` under its gating mode and `opts`.
GateResult layer_gates(const MoELayer& layer, Var x, ParamBinder& bind, Rng& rng,
                       const MoEForwardOptions& opts);

}  // namespace smoe
