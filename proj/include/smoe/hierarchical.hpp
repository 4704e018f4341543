// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

// Two-level mixture: a primary gate picks groups, and each group is itself a
// flat MoE layer gated on the same input.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "smoe/balance.hpp"
#include "smoe/gating.hpp"
#include "smoe/moe_layer.hpp"

namespace smoe {

struct HierarchicalMoE {
  GatingParams primary;          ///< over a groups
  std::vector<MoELayer> groups;  ///< a groups of b experts each
  bool sigmoid_output = false;

  static HierarchicalMoE create(std::size_t input_dim, std::size_t hidden_dim,
                                std::size_t output_dim, std::size_t num_groups,
                                std::size_t experts_per_group, std::size_t k_primary,
                                std::size_t k_secondary, Rng& rng, bool noisy = true);

  std::size_t num_groups() const noexcept { return groups.size(); }
  std::size_t experts_per_group() const { return groups.front().num_experts(); }
  std::size_t total_experts() const { return num_groups() * experts_per_group(); }
  std::size_t input_dim() const { return groups.front().input_dim(); }
  std::size_t output_dim() const { return groups.front().output_dim(); }
  std::size_t expert_parameter_count() const;
  std::size_t gating_parameter_count() const;
  void validate() const;
};

/// Fixed noise draws for every gate: primary is batch x a, secondary[i] is
/// batch x b and is sliced to group i's sub-batch.
struct HierarchicalNoise {
  Matrix primary;
  std::vector<Matrix> secondary;
};

struct HierarchicalOptions {
  MoEForwardOptions moe;
  const HierarchicalNoise* frozen_noise = nullptr;
};

struct HierarchicalOutput {
  Var y;
  GateResult primary;
  DispatchPlan primary_plan;  ///< primary_plan.rows[i] is the sub-batch X^(i)
  std::vector<std::optional<MoEOutput>> groups;  ///< empty for unselected groups
  std::size_t expert_row_evals = 0;
};

/// y = Σ_i Σ_j Gp(x)_i · G_i(x)_j · E_ij(x); only selected groups and, within
/// them, only selected experts are evaluated.
HierarchicalOutput hierarchical_forward(const HierarchicalMoE& h, Var x, ParamBinder& bind,
                                        Rng& rng, const HierarchicalOptions& opts = {});

/// Importance_H(X)_{ij} = Σ_x Gp(x)_i · G_i(x)_j as an a x b tape variable.
Var importance_h(const HierarchicalOutput& out);

/// Value form: primary is batch x a, secondary[i] is batch x b gate values.
Matrix importance_h(const Matrix& primary, std::span<const Matrix> secondary);

/// Load_H(X)_{ij} = Load_primary(X)_i · Load_i(X^(i))_j / |X^(i)|. Groups with
/// an empty sub-batch (or no load) contribute a zero row.
Var load_h(Var primary_load, std::span<const Var> group_loads,
           std::span<const std::size_t> group_sizes);

/// load_h built from the smooth load estimators of a forward pass.
Var load_h(const HierarchicalOutput& out);

/// w_importance · CV²(Importance_H) + w_load · CV²(Load_H) over the flattened
/// a x b matrices. The load term is skipped when w_load is zero.
Var hierarchical_balance_loss(const HierarchicalOutput& out, double w_importance, double w_load);

}  // namespace smoe
