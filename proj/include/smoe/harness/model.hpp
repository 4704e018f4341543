// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

// Toy language model: token embeddings of a fixed context window, a
// feed-forward context encoder, an MoE layer wrapped in sigmoid, dropout and
// a residual add, and a softmax readout over the vocabulary.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "smoe/harness/config.hpp"
#include "smoe/harness/corpus.hpp"
#include "smoe/hierarchical.hpp"
#include "smoe/moe_layer.hpp"

namespace smoe {

struct ToyLM {
  ToyLMConfig config;
  Matrix embedding;  ///< vocab x model_dim
  Matrix encoder_w;  ///< context_len·model_dim x model_dim
  Matrix encoder_b;  ///< 1 x model_dim
  MoELayer moe;               ///< used when !config.hierarchical()
  HierarchicalMoE moe_tree;   ///< used when config.hierarchical()
  Matrix readout_w;  ///< model_dim x vocab
  Matrix readout_b;  ///< 1 x vocab

  static ToyLM build(const ToyLMConfig& cfg);

  /// Every persisted matrix, in a fixed order. Names are stable and unique.
  std::vector<std::pair<std::string, Matrix*>> named_parameters();
  std::vector<std::pair<std::string, const Matrix*>> named_parameters() const;
  /// Subset updated by the optimizer (excludes batchwise thresholds).
  std::vector<std::pair<std::string, Matrix*>> trainable_parameters();
};

struct ParameterReport {
  std::size_t embedding = 0;
  std::size_t encoder = 0;
  std::size_t moe_experts = 0;
  std::size_t moe_gating = 0;
  std::size_t readout = 0;
  std::size_t total() const noexcept {
    return embedding + encoder + moe_experts + moe_gating + readout;
  }
  /// Forward multiply-adds per token, training-time gating included.
  std::size_t ops_per_timestep_excluding_softmax = 0;
  std::size_t ops_per_timestep_including_softmax = 0;
};

ParameterReport parameter_report(const ToyLM& model);

/// Next-token prediction examples: row r predicts targets[r] from
/// contexts[r·L .. r·L + L - 1], oldest token first.
struct Batch {
  std::vector<Token> contexts;
  std::vector<Token> targets;
  std::size_t size() const noexcept { return targets.size(); }
};

/// Examples ending at each position in `positions`; every position must be at
/// least context_len.
Batch make_batch(std::span<const Token> stream, std::span<const std::size_t> positions,
                 std::size_t context_len);

struct ForwardOptions {
  bool train = true;
  bool noise = true;
  bool recompute_activations = false;
};

struct ForwardResult {
  Var logits;        ///< batch x vocab
  Var cross_entropy; ///< mean nats per token
  std::optional<MoEOutput> flat;
  std::optional<HierarchicalOutput> tree;
  std::size_t expert_row_evals = 0;
};

/// `rng` drives gating noise and dropout.
ForwardResult forward(const ToyLM& model, const Batch& batch, ParamBinder& bind, Rng& rng,
                      const ForwardOptions& opts);

}  // namespace smoe
