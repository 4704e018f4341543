// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "smoe/harness/config.hpp"

#include <array>
#include <charconv>
#include <sstream>
#include <type_traits>

#include "smoe/text_config.hpp"

namespace smoe {
namespace {

// Calls f(name, field) for every serialized field, in file order.
template <class Config, class F>
void visit_fields(Config& c, F&& f) {
  f("corpus", c.corpus);
  f("synthetic_modes", c.synthetic_modes);
  f("synthetic_order", c.synthetic_order);
  f("synthetic_successors", c.synthetic_successors);
  f("synthetic_segment", c.synthetic_segment);
  f("train_tokens", c.train_tokens);
  f("eval_tokens", c.eval_tokens);
  f("eval_fraction", c.eval_fraction);
  f("vocab_size", c.vocab_size);
  f("context_len", c.context_len);
  f("model_dim", c.model_dim);
  f("n_experts", c.n_experts);
  f("k", c.k);
  f("expert_hidden", c.expert_hidden);
  f("hierarchical_groups", c.hierarchical_groups);
  f("k_primary", c.k_primary);
  f("gating_mode", c.gating_mode);
  f("moe_sigmoid_output", c.moe_sigmoid_output);
  f("dropout_prob", c.dropout_prob);
  f("w_importance", c.w_importance);
  f("w_load", c.w_load);
  f("batch_size", c.batch_size);
  f("steps", c.steps);
  f("seed", c.seed);
  f("recompute_expert_activations", c.recompute_expert_activations);
  f("learning_rate", c.learning_rate);
  f("warmup_steps", c.warmup_steps);
  f("beta2", c.beta2);
  f("factored_second_moment", c.factored_second_moment);
  f("threshold_lr", c.threshold_lr);
  f("metrics_every", c.metrics_every);
  f("eval_every", c.eval_every);
  f("eval_noise", c.eval_noise);
}

constexpr std::array<std::pair<GatingMode, const char*>, 2> kGatingNames = {
    {{GatingMode::kNoisyTopK, "noisy_topk"}, {GatingMode::kBatchwise, "batchwise"}}};
constexpr std::array<std::pair<FactorMode, const char*>, 3> kFactorNames = {
    {{FactorMode::kAuto, "auto"}, {FactorMode::kOn, "on"}, {FactorMode::kOff, "off"}}};

template <class Enum, std::size_t N>
Enum parse_enum(const std::string& key, const std::string& value,
                const std::array<std::pair<Enum, const char*>, N>& names) {
  for (const auto& [e, name] : names)
    if (value == name) return e;
  throw ConfigError(key + ": unknown value '" + value + "'");
}

template <class Enum, std::size_t N>
const char* enum_name(Enum e, const std::array<std::pair<Enum, const char*>, N>& names) {
  for (const auto& [v, name] : names)
    if (v == e) return name;
  return "?";
}

std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void ToyLMConfig::validate() const {
  auto positive = [](const char* name, std::size_t v) {
    if (v == 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive("vocab_size", vocab_size);
  positive("context_len", context_len);
  positive("model_dim", model_dim);
  positive("n_experts", n_experts);
  positive("k", k);
  positive("expert_hidden", expert_hidden);
  positive("batch_size", batch_size);
  positive("metrics_every", metrics_every);
  if (hierarchical()) {
    if (n_experts % hierarchical_groups != 0)
      throw ConfigError("n_experts must be divisible by hierarchical_groups");
    if (k_primary == 0 || k_primary > hierarchical_groups)
      throw ConfigError("k_primary must be in [1, hierarchical_groups]");
    if (k > n_experts / hierarchical_groups)
      throw ConfigError("k exceeds experts per group");
    if (gating_mode != GatingMode::kNoisyTopK)
      throw ConfigError("hierarchical layers support noisy_topk gating only");
  } else if (k > n_experts) {
    throw ConfigError("k exceeds n_experts");
  }
  if (gating_mode == GatingMode::kBatchwise && batch_size % n_experts != 0)
    throw ConfigError("batch_size must be divisible by n_experts in batchwise mode");
  if (!(dropout_prob >= 0.0 && dropout_prob < 1.0))
    throw ConfigError("dropout_prob must be in [0, 1)");
  if (w_importance < 0.0 || w_load < 0.0) throw ConfigError("loss weights must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must be in (0, 1)");
  if (corpus == "synthetic") {
    positive("synthetic_modes", synthetic_modes);
    positive("synthetic_successors", synthetic_successors);
    positive("synthetic_segment", synthetic_segment);
    if (synthetic_order < 2) throw ConfigError("synthetic_order must be at least 2");
    if (vocab_size < synthetic_modes * 2)
      throw ConfigError("vocab_size too small for synthetic_modes");
  }
}

ToyLMConfig parse_toy_config(const std::string& text) {
  ToyLMConfig cfg;
  for (const ConfigSection& sec : parse_config_text(text)) {
    if (!sec.name.empty() && sec.name != "model" && sec.name != "train" && sec.name != "data") {
      throw ConfigError("line " + std::to_string(sec.line) + ": unknown section [" + sec.name +
                        "]");
    }
    for (const auto& [key, value] : sec.entries) {
      bool matched = false;
      visit_fields(cfg, [&](const char* name, auto& field) {
        if (matched || key != name) return;
        matched = true;
        using T = std::decay_t<decltype(field)>;
        if constexpr (std::is_same_v<T, std::string>) field = value;
        else if constexpr (std::is_same_v<T, bool>) field = parse_bool(key, value);
        else if constexpr (std::is_same_v<T, double>) field = parse_real(key, value);
        else if constexpr (std::is_same_v<T, GatingMode>) field = parse_enum(key, value, kGatingNames);
        else if constexpr (std::is_same_v<T, FactorMode>) field = parse_enum(key, value, kFactorNames);
        else field = static_cast<T>(parse_count(key, value));
      });
      if (!matched) throw ConfigError("unknown config key: " + key);
    }
  }
  cfg.validate();
  return cfg;
}

ToyLMConfig load_toy_config(const std::string& path) { return parse_toy_config(read_text_file(path)); }

std::string format_toy_config(const ToyLMConfig& cfg) {
  std::ostringstream os;
  visit_fields(cfg, [&](const char* name, const auto& field) {
    using T = std::decay_t<decltype(field)>;
    os << name << " = ";
    if constexpr (std::is_same_v<T, bool>) os << (field ? "true" : "false");
    else if constexpr (std::is_same_v<T, double>) os << format_real(field);
    else if constexpr (std::is_same_v<T, GatingMode>) os << enum_name(field, kGatingNames);
    else if constexpr (std::is_same_v<T, FactorMode>) os << enum_name(field, kFactorNames);
    else os << field;
    os << '\n';
  });
  return os.str();
}

}  // namespace smoe
