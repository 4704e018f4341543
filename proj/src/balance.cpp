// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "smoe/balance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "smoe/kernels.hpp"
#include "smoe/moe_layer.hpp"
#include "smoe/ops.hpp"

namespace smoe {
namespace {

/// Indices sorted by descending value, lower index first on ties.
std::vector<std::size_t> descending_order(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] > v[b] || (v[a] == v[b] && a < b); });
  return order;
}

/// Index of the k-th largest entry excluding i, given the full ranking.
std::size_t kth_excluding_index(const std::vector<std::size_t>& order,
                                const std::vector<std::size_t>& rank, std::size_t k,
                                std::size_t i) {
  return rank[i] < k ? order[k] : order[k - 1];
}

std::vector<std::size_t> ranks_of(const std::vector<std::size_t>& order) {
  std::vector<std::size_t> rank(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r;
  return rank;
}

}  // namespace

Var importance(Var gates) {
  if (gates.rows() == 0) throw std::invalid_argument("importance: empty batch");
  return col_sum(gates);
}

Var importance_loss(Var gates, double w_importance) {
  return scale(cv_squared(importance(gates)), w_importance);
}

std::pair<double, std::size_t> kth_excluding(std::span<const double> v, std::size_t k,
                                             std::size_t i) {
  if (k == 0 || k >= v.size()) throw std::invalid_argument("kth_excluding: need 1 <= k < n");
  if (i >= v.size()) throw std::out_of_range("kth_excluding: index out of range");
  const auto order = descending_order(v);
  const std::size_t j = kth_excluding_index(order, ranks_of(order), k, i);
  return {v[j], j};
}

double prob_nonzero(std::span<const double> clean, std::span<const double> noisy,
                    std::span<const double> stddev, std::size_t k, std::size_t i) {
  if (clean.size() != noisy.size() || clean.size() != stddev.size()) {
    throw ShapeError("prob_nonzero: row lengths differ");
  }
  if (k >= clean.size()) return 1.0;
  const double threshold = kth_excluding(noisy, k, i).first;
  return kernel::std_normal_cdf((clean[i] - threshold) / stddev[i]);
}

Var prob_in_top_k(const GateResult& gates) {
  if (!gates.has_noise()) throw std::invalid_argument("prob_in_top_k: gating had no noise");
  const Matrix& clean = gates.clean_logits.value();
  const Matrix& noisy = gates.noisy_logits.value();
  const Matrix& sd = gates.noise_stddev.value();
  const std::size_t n = clean.cols();
  const std::size_t k = gates.k;
  Tape& tape = gates.clean_logits.tape();
  if (k >= n) return tape.constant(Matrix(clean.rows(), n, 1.0));

  Matrix prob(clean.rows(), n);
  Matrix z(clean.rows(), n);
  std::vector<std::size_t> thresh_idx(clean.rows() * n);
  for (std::size_t r = 0; r < clean.rows(); ++r) {
    const auto order = descending_order(noisy.row(r));
    const auto rank = ranks_of(order);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = kth_excluding_index(order, rank, k, i);
      thresh_idx[r * n + i] = j;
      z(r, i) = (clean(r, i) - noisy(r, j)) / sd(r, i);
      prob(r, i) = kernel::std_normal_cdf(z(r, i));
    }
  }
  const std::size_t ic = gates.clean_logits.id();
  const std::size_t ih = gates.noisy_logits.id();
  const std::size_t is = gates.noise_stddev.id();
  return tape.record(
      std::move(prob), {gates.clean_logits, gates.noisy_logits, gates.noise_stddev},
      [ic, ih, is, n, z = std::move(z), thresh_idx = std::move(thresh_idx)](Tape& t,
                                                                           std::size_t self) {
        const Matrix& g = t.grad(self);
        const Matrix& sd = t.value(is);
        Matrix dclean(g.rows(), n), dnoisy(g.rows(), n), dsd(g.rows(), n);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          for (std::size_t i = 0; i < n; ++i) {
            const double zi = z(r, i);
            const double dz = g(r, i) * kernel::std_normal_pdf(zi) / sd(r, i);
            dclean(r, i) += dz;
            dnoisy(r, thresh_idx[r * n + i]) -= dz;
            dsd(r, i) -= dz * zi;
          }
        }
        t.accumulate(ic, dclean);
        t.accumulate(ih, dnoisy);
        t.accumulate(is, dsd);
      });
}

Var load(const GateResult& gates) {
  if (!gates.has_noise()) {
    throw std::invalid_argument("load: smooth load is undefined without gating noise");
  }
  if (gates.batch() == 0) throw std::invalid_argument("load: empty batch");
  return col_sum(prob_in_top_k(gates));
}

Var load_loss(const GateResult& gates, double w_load) {
  return scale(cv_squared(load(gates)), w_load);
}

std::vector<double> hard_load(const DispatchPlan& plan) {
  std::vector<double> out(plan.num_experts());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(plan.rows[i].size());
  return out;
}

BalanceReport balance_report(std::vector<double> imp, std::vector<double> ld) {
  BalanceReport rep;
  rep.cv_importance = std::sqrt(kernel::cv_squared(imp));
  rep.cv_load = std::sqrt(kernel::cv_squared(ld));
  if (!ld.empty()) {
    const double mean = std::accumulate(ld.begin(), ld.end(), 0.0) / static_cast<double>(ld.size());
    const double hi = *std::max_element(ld.begin(), ld.end());
    rep.max_over_mean_load = mean > 0.0 ? hi / mean : 0.0;
  }
  rep.importance = std::move(imp);
  rep.load = std::move(ld);
  return rep;
}

BalanceReport balance_report(const GateResult& gates, const DispatchPlan& plan) {
  const Matrix imp = kernel::col_sums(gates.gates.value());
  std::vector<double> ld;
  if (gates.has_noise()) {
    Tape scratch;
    GateResult detached;
    detached.k = gates.k;
    detached.clean_logits = scratch.constant(gates.clean_logits.value());
    detached.noisy_logits = scratch.constant(gates.noisy_logits.value());
    detached.noise_stddev = scratch.constant(gates.noise_stddev.value());
    const Matrix l = kernel::col_sums(prob_in_top_k(detached).value());
    ld.assign(l.data().begin(), l.data().end());
  } else {
    ld = hard_load(plan);
  }
  return balance_report(std::vector<double>(imp.data().begin(), imp.data().end()), std::move(ld));
}

}  // namespace smoe
