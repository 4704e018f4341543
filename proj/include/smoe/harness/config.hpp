// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "smoe/moe_layer.hpp"
#include "smoe/optimizer.hpp"

namespace smoe {

/// Everything needed to rebuild a toy language model and its data. The text
/// form is "key = value" lines using the field names below.
struct ToyLMConfig {
  // Data.
  std::string corpus = "synthetic";  ///< "synthetic" or a path to a text file
  std::size_t synthetic_modes = 4;
  std::size_t synthetic_order = 2;        ///< n-gram order of each mode
  std::size_t synthetic_successors = 3;   ///< continuations per context
  std::size_t synthetic_segment = 128;    ///< mean tokens between mode switches
  std::size_t train_tokens = 400000;
  std::size_t eval_tokens = 16384;
  double eval_fraction = 0.05;            ///< file corpora only

  // Model.
  std::size_t vocab_size = 256;
  std::size_t context_len = 4;
  std::size_t model_dim = 64;
  std::size_t n_experts = 16;
  std::size_t k = 4;
  std::size_t expert_hidden = 128;
  /// 0 for a flat layer; otherwise the number of groups a, with
  /// n_experts / a experts per group and k experts chosen per group.
  std::size_t hierarchical_groups = 0;
  std::size_t k_primary = 2;
  GatingMode gating_mode = GatingMode::kNoisyTopK;
  bool moe_sigmoid_output = true;
  double dropout_prob = 0.0;

  // Objective and training.
  double w_importance = 0.1;
  double w_load = 0.1;
  std::size_t batch_size = 256;
  std::size_t steps = 1000;
  std::uint64_t seed = 1;
  bool recompute_expert_activations = false;
  double learning_rate = 3e-3;
  std::size_t warmup_steps = 100;
  double beta2 = 0.999;
  FactorMode factored_second_moment = FactorMode::kAuto;
  double threshold_lr = 0.01;
  std::size_t metrics_every = 100;
  /// Metrics rows use an eval pass; 0 evaluates only after the last step.
  std::size_t eval_every = 0;
  /// Keep gating noise on during evaluation.
  bool eval_noise = false;

  bool hierarchical() const noexcept { return hierarchical_groups > 0; }
  /// Experts evaluated per example.
  std::size_t active_experts() const noexcept {
    return hierarchical() ? k_primary * k : k;
  }

  /// Throws ConfigError on inconsistent settings.
  void validate() const;
};

ToyLMConfig parse_toy_config(const std::string& text);
ToyLMConfig load_toy_config(const std::string& path);
/// Inverse of parse_toy_config; round-trips every field exactly.
std::string format_toy_config(const ToyLMConfig& cfg);

}  // namespace smoe
