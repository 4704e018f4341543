// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "smoe/harness/model.hpp"

#include <cmath>
#include <stdexcept>

#include "smoe/ops.hpp"
#include "smoe/random.hpp"

namespace smoe {
namespace {

Matrix glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  return uniform_sample(fan_in, fan_out,
                        std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
}

template <class Self, class Out>
void collect(Self& m, Out& out) {
  out.emplace_back("embedding", &m.embedding);
  out.emplace_back("encoder.w", &m.encoder_w);
  out.emplace_back("encoder.b", &m.encoder_b);
  auto layer = [&out](const std::string& prefix, auto& l) {
    out.emplace_back(prefix + "gate.w_gate", &l.gating.w_gate);
    out.emplace_back(prefix + "gate.w_noise", &l.gating.w_noise);
    for (std::size_t i = 0; i < l.experts.size(); ++i) {
      const std::string p = prefix + "expert." + std::to_string(i) + ".";
      out.emplace_back(p + "w1", &l.experts[i].w1);
      out.emplace_back(p + "w2", &l.experts[i].w2);
    }
  };
  if (m.config.hierarchical()) {
    out.emplace_back("moe.primary.w_gate", &m.moe_tree.primary.w_gate);
    out.emplace_back("moe.primary.w_noise", &m.moe_tree.primary.w_noise);
    for (std::size_t g = 0; g < m.moe_tree.groups.size(); ++g)
      layer("moe.group." + std::to_string(g) + ".", m.moe_tree.groups[g]);
  } else {
    layer("moe.", m.moe);
    if (m.config.gating_mode == GatingMode::kBatchwise)
      out.emplace_back("moe.thresholds", &m.moe.thresholds.values);
  }
  out.emplace_back("readout.w", &m.readout_w);
  out.emplace_back("readout.b", &m.readout_b);
}

}  // namespace

ToyLM ToyLM::build(const ToyLMConfig& cfg) {
  cfg.validate();
  ToyLM m;
  m.config = cfg;
  const std::size_t d = cfg.model_dim;
  Rng rng = Rng(cfg.seed).split(100);
  Rng emb_rng = rng.split(0), enc_rng = rng.split(1), moe_rng = rng.split(2), out_rng = rng.split(3);
  m.embedding = gaussian_sample(cfg.vocab_size, d, emb_rng);
  m.encoder_w = glorot(cfg.context_len * d, d, enc_rng);
  m.encoder_b = Matrix(1, d);
  const bool noisy = cfg.gating_mode == GatingMode::kNoisyTopK;
  if (cfg.hierarchical()) {
    m.moe_tree = HierarchicalMoE::create(d, cfg.expert_hidden, d, cfg.hierarchical_groups,
                                         cfg.n_experts / cfg.hierarchical_groups, cfg.k_primary,
                                         cfg.k, moe_rng, noisy);
    m.moe_tree.sigmoid_output = cfg.moe_sigmoid_output;
  } else {
    m.moe = MoELayer::create(d, cfg.expert_hidden, d, cfg.n_experts, cfg.k, moe_rng, noisy);
    m.moe.sigmoid_output = cfg.moe_sigmoid_output;
    m.moe.mode = cfg.gating_mode;
  }
  m.readout_w = glorot(d, cfg.vocab_size, out_rng);
  m.readout_b = Matrix(1, cfg.vocab_size);
  return m;
}

std::vector<std::pair<std::string, Matrix*>> ToyLM::named_parameters() {
  std::vector<std::pair<std::string, Matrix*>> out;
  collect(*this, out);
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> ToyLM::named_parameters() const {
  std::vector<std::pair<std::string, const Matrix*>> out;
  collect(*this, out);
  return out;
}

std::vector<std::pair<std::string, Matrix*>> ToyLM::trainable_parameters() {
  auto all = named_parameters();
  std::erase_if(all, [](const auto& p) { return p.first == "moe.thresholds"; });
  return all;
}

ParameterReport parameter_report(const ToyLM& m) {
  const ToyLMConfig& c = m.config;
  ParameterReport r;
  r.embedding = m.embedding.size();
  r.encoder = m.encoder_w.size() + m.encoder_b.size();
  r.readout = m.readout_w.size() + m.readout_b.size();
  const std::size_t d = c.model_dim;
  const std::size_t gate_mults = c.gating_mode == GatingMode::kNoisyTopK ? 2 : 1;
  std::size_t gating_ops = 0;
  if (c.hierarchical()) {
    r.moe_experts = m.moe_tree.expert_parameter_count();
    r.moe_gating = m.moe_tree.gating_parameter_count();
    const std::size_t b = c.n_experts / c.hierarchical_groups;
    gating_ops = gate_mults * d * (c.hierarchical_groups + c.k_primary * b);
  } else {
    r.moe_experts = m.moe.expert_parameter_count();
    r.moe_gating = m.moe.gating_parameter_count();
    gating_ops = gate_mults * d * c.n_experts;
  }
  const std::size_t expert_ops = c.active_experts() * 2 * d * c.expert_hidden;
  r.ops_per_timestep_excluding_softmax = c.context_len * d * d + gating_ops + expert_ops;
  r.ops_per_timestep_including_softmax = r.ops_per_timestep_excluding_softmax + d * c.vocab_size;
  return r;
}

Batch make_batch(std::span<const Token> stream, std::span<const std::size_t> positions,
                 std::size_t context_len) {
  Batch b;
  b.contexts.reserve(positions.size() * context_len);
  b.targets.reserve(positions.size());
  for (std::size_t p : positions) {
    if (p < context_len || p >= stream.size())
      throw std::out_of_range("make_batch: position " + std::to_string(p) + " out of range");
    b.contexts.insert(b.contexts.end(), stream.begin() + static_cast<std::ptrdiff_t>(p - context_len),
                      stream.begin() + static_cast<std::ptrdiff_t>(p));
    b.targets.push_back(stream[p]);
  }
  return b;
}

ForwardResult forward(const ToyLM& m, const Batch& batch, ParamBinder& bind, Rng& rng,
                      const ForwardOptions& opts) {
  const ToyLMConfig& c = m.config;
  const std::size_t n = batch.size(), L = c.context_len;
  if (n == 0) throw std::invalid_argument("forward: empty batch");
  if (batch.contexts.size() != n * L) throw ShapeError("forward: context length mismatch");
  for (Token t : batch.contexts)
    if (t >= c.vocab_size) throw std::out_of_range("forward: token id exceeds vocab");

  Var emb = bind(m.embedding);
  std::vector<Var> slots;
  std::vector<std::size_t> ids(n);
  for (std::size_t p = 0; p < L; ++p) {
    for (std::size_t r = 0; r < n; ++r) ids[r] = batch.contexts[r * L + p];
    slots.push_back(gather_rows(emb, ids));
  }
  Var h0 = relu(add_row_broadcast(matmul(concat_cols(slots), bind(m.encoder_w)), bind(m.encoder_b)));

  Rng gate_rng = rng.split(0), drop_rng = rng.split(1);
  MoEForwardOptions mo;
  mo.train = opts.train;
  mo.noise = opts.noise;
  mo.recompute_activations = opts.recompute_activations;

  ForwardResult res;
  Var y;
  if (c.hierarchical()) {
    HierarchicalOptions ho;
    ho.moe = mo;
    res.tree = hierarchical_forward(m.moe_tree, h0, bind, gate_rng, ho);
    y = res.tree->y;
    res.expert_row_evals = res.tree->expert_row_evals;
  } else {
    res.flat = moe_forward(m.moe, h0, bind, gate_rng, mo);
    y = res.flat->y;
    res.expert_row_evals = res.flat->expert_row_evals;
  }
  if (opts.train) y = dropout(y, c.dropout_prob, drop_rng);
  Var h1 = add(h0, y);
  res.logits = add_row_broadcast(matmul(h1, bind(m.readout_w)), bind(m.readout_b));
  res.cross_entropy = softmax_cross_entropy(res.logits, batch.targets);
  return res;
}

}  // namespace smoe
