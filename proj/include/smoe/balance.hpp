// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "smoe/gating.hpp"
#include "smoe/tape.hpp"

namespace smoe {

struct DispatchPlan;

/// Per-expert utilization summary for one batch.
struct BalanceReport {
  std::vector<double> importance;
  std::vector<double> load;
  double cv_importance = 0.0;  ///< coefficient of variation, not squared
  double cv_load = 0.0;
  double max_over_mean_load = 0.0;
};

/// Batchwise column sums of the gate matrix (1 x n). Throws on an empty batch.
Var importance(Var gates);

/// w · CV(importance(gates))².
Var importance_loss(Var gates, double w_importance);

/// The k-th largest entry of v ignoring entry i, as (value, index). Ties are
/// ranked by index, matching top_k_indices. Requires k < v.size().
std::pair<double, std::size_t> kth_excluding(std::span<const double> v, std::size_t k,
                                             std::size_t i);

/// Probability that expert i stays in the top k of one row when its noise is
/// redrawn and every other component keeps its sampled value:
/// Φ((clean_i − kth_excluding(noisy, k, i)) / stddev_i). Returns 1 when k ≥ n.
double prob_nonzero(std::span<const double> clean, std::span<const double> noisy,
                    std::span<const double> stddev, std::size_t k, std::size_t i);

/// Matrix of prob_nonzero over every (row, expert), differentiable in the
/// clean logits, the noise scale and the competing noisy logits.
Var prob_in_top_k(const GateResult& gates);

/// Smooth load estimate Σ_x P(x, i) (1 x n). Throws when gating had no noise.
Var load(const GateResult& gates);

/// w · CV(load(gates))².
Var load_loss(const GateResult& gates, double w_load);

/// Hard assignment counts per expert.
std::vector<double> hard_load(const DispatchPlan& plan);

/// Summary from the gate values; load uses the smooth estimator when noise is
/// present and hard counts from `plan` otherwise.
BalanceReport balance_report(const GateResult& gates, const DispatchPlan& plan);
BalanceReport balance_report(std::vector<double> importance, std::vector<double> load);

}  // namespace smoe
