// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "smoe/moe_layer.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

#include "smoe/kernels.hpp"
#include "smoe/ops.hpp"

namespace smoe {

Expert Expert::init(std::size_t input_dim, std::size_t hidden_dim, std::size_t output_dim,
                    Rng& rng) {
  const double l1 = std::sqrt(6.0 / static_cast<double>(input_dim + hidden_dim));
  const double l2 = std::sqrt(6.0 / static_cast<double>(hidden_dim + output_dim));
  Expert e;
  e.w1 = uniform_sample(input_dim, hidden_dim, l1, rng);
  e.w2 = uniform_sample(hidden_dim, output_dim, l2, rng);
  return e;
}

MoELayer MoELayer::create(std::size_t input_dim, std::size_t hidden_dim, std::size_t output_dim,
                          std::size_t num_experts, std::size_t k, Rng& rng, bool noisy) {
  MoELayer layer;
  layer.experts.reserve(num_experts);
  for (std::size_t i = 0; i < num_experts; ++i) {
    Rng expert_rng = rng.split(i);
    layer.experts.push_back(Expert::init(input_dim, hidden_dim, output_dim, expert_rng));
  }
  layer.gating = GatingParams::zeros(input_dim, num_experts, k, noisy);
  layer.thresholds = ThresholdVector::zeros(num_experts);
  return layer;
}

std::size_t MoELayer::expert_parameter_count() const {
  std::size_t total = 0;
  for (const Expert& e : experts) total += e.parameter_count();
  return total;
}

void MoELayer::validate() const {
  if (experts.empty()) throw std::invalid_argument("MoELayer: no experts");
  for (const Expert& e : experts) {
    if (!e.w1.same_shape(experts.front().w1) || !e.w2.same_shape(experts.front().w2)) {
      throw ShapeError("MoELayer: experts must share one architecture");
    }
    if (e.w1.cols() != e.w2.rows()) {
      throw ShapeError("Expert: w1 " + e.w1.shape_str() + " incompatible with w2 " +
                       e.w2.shape_str());
    }
  }
  gating.validate();
  if (gating.num_experts() != experts.size() || gating.input_dim() != input_dim()) {
    throw ShapeError("MoELayer: gating " + gating.w_gate.shape_str() + " does not match " +
                     std::to_string(experts.size()) + " experts of input width " +
                     std::to_string(input_dim()));
  }
}

std::size_t DispatchPlan::total() const noexcept {
  std::size_t n = 0;
  for (const auto& r : rows) n += r.size();
  return n;
}

DispatchPlan build_dispatch(const Matrix& gates) {
  DispatchPlan plan;
  plan.rows.resize(gates.cols());
  plan.gate_values.resize(gates.cols());
  for (std::size_t r = 0; r < gates.rows(); ++r) {
    for (std::size_t c = 0; c < gates.cols(); ++c) {
      if (gates(r, c) > 0.0) {
        plan.rows[c].push_back(r);
        plan.gate_values[c].push_back(gates(r, c));
      }
    }
  }
  return plan;
}

DispatchPlan build_dispatch(const GateResult& gates) { return build_dispatch(gates.gates.value()); }

std::vector<Var> dispatch(Var x, const DispatchPlan& plan) {
  std::vector<Var> out(plan.num_experts());
  for (std::size_t i = 0; i < plan.num_experts(); ++i)
    if (!plan.rows[i].empty()) out[i] = gather_rows(x, plan.rows[i]);
  return out;
}

Var combine(std::span<const Var> expert_outputs, Var gates, const DispatchPlan& plan,
            std::size_t batch, std::size_t output_dim) {
  if (expert_outputs.size() != plan.num_experts()) {
    throw std::invalid_argument("combine: expected one output per expert");
  }
  std::vector<Var> parts;
  std::vector<std::vector<std::size_t>> rows;
  for (std::size_t i = 0; i < plan.num_experts(); ++i) {
    if (plan.rows[i].empty()) continue;
    Var weight = gather_column(gates, plan.rows[i], i);
    parts.push_back(mul_col_broadcast(expert_outputs[i], weight));
    rows.push_back(plan.rows[i]);
  }
  if (parts.empty()) return gates.tape().constant(Matrix(batch, output_dim));
  return scatter_add_rows(parts, rows, batch, output_dim);
}

Var expert_forward(const Expert& e, Var x, ParamBinder& bind, bool recompute) {
  if (x.cols() != e.input_dim()) {
    throw ShapeError("expert_forward: input " + x.value().shape_str() + " vs w1 " +
                     e.w1.shape_str());
  }
  Var w1 = bind(e.w1);
  Var w2 = bind(e.w2);
  Tape& tape = x.tape();
  auto hidden = std::make_shared<Matrix>(kernel::relu(kernel::matmul(x.value(), w1.value())));
  Matrix out = kernel::matmul(*hidden, w2.value());
  if (recompute) {
    hidden.reset();
  } else {
    tape.note_retained(hidden->size());
  }
  const std::size_t ix = x.id(), i1 = w1.id(), i2 = w2.id();
  return tape.record(std::move(out), {x, w1, w2}, [ix, i1, i2, hidden](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix h = hidden ? *hidden : kernel::relu(kernel::matmul(t.value(ix), t.value(i1)));
    if (t.requires_grad(i2)) t.accumulate(i2, kernel::matmul_tn(h, g));
    Matrix dh = kernel::matmul_nt(g, t.value(i2));
    for (std::size_t i = 0; i < dh.size(); ++i)
      if (h[i] <= 0.0) dh[i] = 0.0;
    if (t.requires_grad(i1)) t.accumulate(i1, kernel::matmul_tn(t.value(ix), dh));
    if (t.requires_grad(ix)) t.accumulate(ix, kernel::matmul_nt(dh, t.value(i1)));
  });
}

GateResult layer_gates(const MoELayer& layer, Var x, ParamBinder& bind, Rng& rng,
                       const MoEForwardOptions& opts) {
  if (layer.mode == GatingMode::kBatchwise) {
    if (!opts.train) return threshold_gate(x, layer.gating, bind, layer.thresholds);
    const std::size_t m = batchwise_capacity(x.rows(), layer.num_experts(), layer.gating.k);
    return batchwise_gate(x, layer.gating, bind, m);
  }
  if (opts.frozen_noise != nullptr && layer.gating.noisy && opts.noise) {
    return noisy_topk_gate(x, layer.gating, bind, *opts.frozen_noise);
  }
  return noisy_topk_gate(x, layer.gating, bind, rng, opts.noise);
}

MoEOutput moe_forward(const MoELayer& layer, Var x, ParamBinder& bind, Rng& rng,
                      const MoEForwardOptions& opts) {
  layer.validate();
  if (x.cols() != layer.input_dim()) {
    throw ShapeError("moe_forward: input " + x.value().shape_str() + " vs layer input width " +
                     std::to_string(layer.input_dim()));
  }
  MoEOutput out;
  out.gates = layer_gates(layer, x, bind, rng, opts);
  out.plan = build_dispatch(out.gates);
  std::vector<Var> inputs = dispatch(x, out.plan);
  std::vector<Var> outputs(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].valid()) continue;
    outputs[i] = expert_forward(layer.experts[i], inputs[i], bind, opts.recompute_activations);
    out.expert_row_evals += inputs[i].rows();
  }
  out.y = combine(outputs, out.gates.gates, out.plan, x.rows(), layer.output_dim());
  if (layer.sigmoid_output) out.y = sigmoid(out.y);
  return out;
}

}  // namespace smoe
