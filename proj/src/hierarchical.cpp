// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "smoe/hierarchical.hpp"

#include <stdexcept>
#include <string>

#include "smoe/ops.hpp"

namespace smoe {

HierarchicalMoE HierarchicalMoE::create(std::size_t input_dim, std::size_t hidden_dim,
                                        std::size_t output_dim, std::size_t num_groups,
                                        std::size_t experts_per_group, std::size_t k_primary,
                                        std::size_t k_secondary, Rng& rng, bool noisy) {
  HierarchicalMoE h;
  h.primary = GatingParams::zeros(input_dim, num_groups, k_primary, noisy);
  h.groups.reserve(num_groups);
  for (std::size_t i = 0; i < num_groups; ++i) {
    Rng group_rng = rng.split(1000 + i);
    h.groups.push_back(MoELayer::create(input_dim, hidden_dim, output_dim, experts_per_group,
                                        k_secondary, group_rng, noisy));
  }
  return h;
}

std::size_t HierarchicalMoE::expert_parameter_count() const {
  std::size_t total = 0;
  for (const MoELayer& g : groups) total += g.expert_parameter_count();
  return total;
}

std::size_t HierarchicalMoE::gating_parameter_count() const {
  std::size_t total = primary.w_gate.size() + primary.w_noise.size();
  for (const MoELayer& g : groups) total += g.gating_parameter_count();
  return total;
}

void HierarchicalMoE::validate() const {
  if (groups.empty()) throw std::invalid_argument("HierarchicalMoE: no groups");
  primary.validate();
  if (primary.num_experts() != groups.size()) {
    throw ShapeError("HierarchicalMoE: primary gate over " + std::to_string(primary.num_experts()) +
                     " groups but " + std::to_string(groups.size()) + " groups present");
  }
  for (const MoELayer& g : groups) {
    g.validate();
    if (g.num_experts() != experts_per_group() || !g.experts.front().w1.same_shape(groups.front().experts.front().w1) ||
        !g.experts.front().w2.same_shape(groups.front().experts.front().w2)) {
      throw ShapeError("HierarchicalMoE: groups must share one expert architecture");
    }
  }
  if (primary.input_dim() != input_dim()) throw ShapeError("HierarchicalMoE: primary input width");
}

HierarchicalOutput hierarchical_forward(const HierarchicalMoE& h, Var x, ParamBinder& bind,
                                        Rng& rng, const HierarchicalOptions& opts) {
  h.validate();
  if (x.cols() != h.input_dim()) {
    throw ShapeError("hierarchical_forward: input " + x.value().shape_str() +
                     " vs input width " + std::to_string(h.input_dim()));
  }
  HierarchicalOutput out;
  const bool noisy = opts.moe.noise && h.primary.noisy;
  if (opts.frozen_noise != nullptr && noisy) {
    out.primary = noisy_topk_gate(x, h.primary, bind, opts.frozen_noise->primary);
  } else {
    out.primary = noisy_topk_gate(x, h.primary, bind, rng, opts.moe.noise);
  }
  out.primary_plan = build_dispatch(out.primary);
  out.groups.resize(h.num_groups());

  // Per-call root for the group streams. Splitting the caller's generator
  // directly would replay the same secondary noise on every call.
  const Rng group_root(rng.engine()());
  std::vector<Var> group_outputs(h.num_groups());
  for (std::size_t i = 0; i < h.num_groups(); ++i) {
    const auto& rows = out.primary_plan.rows[i];
    if (rows.empty()) continue;
    Var xi = gather_rows(x, rows);
    MoEForwardOptions sub = opts.moe;
    Matrix sliced;
    if (opts.frozen_noise != nullptr) {
      const Matrix& full = opts.frozen_noise->secondary.at(i);
      sliced = Matrix(rows.size(), full.cols());
      for (std::size_t t = 0; t < rows.size(); ++t)
        for (std::size_t c = 0; c < full.cols(); ++c) sliced(t, c) = full(rows[t], c);
      sub.frozen_noise = &sliced;
    }
    Rng group_rng = group_root.split(i);
    MoEOutput g = moe_forward(h.groups[i], xi, bind, group_rng, sub);
    out.expert_row_evals += g.expert_row_evals;
    group_outputs[i] = g.y;
    out.groups[i] = std::move(g);
  }
  out.y = combine(group_outputs, out.primary.gates, out.primary_plan, x.rows(), h.output_dim());
  if (h.sigmoid_output) out.y = sigmoid(out.y);
  return out;
}

Var importance_h(const HierarchicalOutput& out) {
  Tape& tape = out.primary.gates.tape();
  std::vector<Var> rows;
  for (std::size_t i = 0; i < out.groups.size(); ++i) {
    if (!out.groups[i]) {
      rows.emplace_back();
      continue;
    }
    Var gp = gather_column(out.primary.gates, out.primary_plan.rows[i], i);
    rows.push_back(col_sum(mul_col_broadcast(out.groups[i]->gates.gates, gp)));
  }
  std::size_t width = 0;
  for (const Var& r : rows)
    if (r.valid()) width = r.cols();
  if (width == 0) throw std::invalid_argument("importance_h: no group received examples");
  for (Var& r : rows)
    if (!r.valid()) r = tape.constant(Matrix(1, width));
  return concat_rows(rows);
}

Matrix importance_h(const Matrix& primary, std::span<const Matrix> secondary) {
  if (secondary.size() != primary.cols()) throw ShapeError("importance_h: group count mismatch");
  const std::size_t b = secondary.empty() ? 0 : secondary.front().cols();
  Matrix out(primary.cols(), b);
  for (std::size_t i = 0; i < primary.cols(); ++i) {
    const Matrix& s = secondary[i];
    if (s.rows() != primary.rows() || s.cols() != b) throw ShapeError("importance_h: secondary shape");
    for (std::size_t x = 0; x < primary.rows(); ++x)
      for (std::size_t j = 0; j < b; ++j) out(i, j) += primary(x, i) * s(x, j);
  }
  return out;
}

Var load_h(Var primary_load, std::span<const Var> group_loads,
           std::span<const std::size_t> group_sizes) {
  const std::size_t a = primary_load.cols();
  if (group_loads.size() != a || group_sizes.size() != a) {
    throw ShapeError("load_h: expected one load and size per group");
  }
  std::size_t width = 0;
  for (const Var& l : group_loads)
    if (l.valid()) width = l.cols();
  if (width == 0) throw std::invalid_argument("load_h: no group load available");
  Tape& tape = primary_load.tape();
  const std::size_t zero_row[] = {0};
  std::vector<Var> rows;
  for (std::size_t i = 0; i < a; ++i) {
    if (!group_loads[i].valid() || group_sizes[i] == 0) {
      rows.push_back(tape.constant(Matrix(1, width)));
      continue;
    }
    Var lp = gather_column(primary_load, zero_row, i);
    rows.push_back(mul_col_broadcast(scale(group_loads[i], 1.0 / static_cast<double>(group_sizes[i])), lp));
  }
  return concat_rows(rows);
}

Var load_h(const HierarchicalOutput& out) {
  Var primary = load(out.primary);
  std::vector<Var> group_loads(out.groups.size());
  std::vector<std::size_t> sizes(out.groups.size(), 0);
  for (std::size_t i = 0; i < out.groups.size(); ++i) {
    if (!out.groups[i]) continue;
    group_loads[i] = load(out.groups[i]->gates);
    sizes[i] = out.primary_plan.rows[i].size();
  }
  return load_h(primary, group_loads, sizes);
}

Var hierarchical_balance_loss(const HierarchicalOutput& out, double w_importance, double w_load) {
  Var loss = scale(cv_squared(importance_h(out)), w_importance);
  if (w_load != 0.0) loss = add(loss, scale(cv_squared(load_h(out)), w_load));
  return loss;
}

}  // namespace smoe
