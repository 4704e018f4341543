// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "smoe/balance.hpp"
#include "smoe/gradcheck.hpp"
#include "smoe/kernels.hpp"
#include "smoe/moe_layer.hpp"
#include "smoe/ops.hpp"

namespace smoe {
namespace {

TEST(Importance, ColumnSumsOfGates) {
  Tape t;
  const Matrix g = Matrix::from_rows({{0.5, 0.5, 0}, {0, 0.25, 0.75}});
  EXPECT_EQ(importance(t.constant(g)).value(), Matrix::from_rows({{0.5, 0.75, 0.75}}));
  EXPECT_THROW(importance(t.constant(Matrix(0, 3))), std::invalid_argument);
}

TEST(Importance, LossIsWeightedSquaredCv) {
  Tape t;
  const Matrix g = Matrix::from_rows({{1, 0, 0, 0}, {0, 1, 0, 0}, {0.5, 0.5, 0, 0}});
  // importance [1.5, 1.5, 0, 0]: mean 0.75, variance 0.5625, CV² = 1
  EXPECT_NEAR(importance_loss(t.constant(g), 0.1).value().item(), 0.1, 1e-15);
  const Matrix uniform(5, 4, 0.25);
  EXPECT_EQ(importance_loss(t.constant(uniform), 1.0).value().item(), 0.0);
}

TEST(KthExcluding, SkipsTheQueriedEntry) {
  const double v[] = {4, 9, 1, 7};
  EXPECT_EQ(kth_excluding(v, 1, 1), (std::pair<double, std::size_t>{7, 3}));
  EXPECT_EQ(kth_excluding(v, 2, 1), (std::pair<double, std::size_t>{4, 0}));
  EXPECT_EQ(kth_excluding(v, 2, 2), (std::pair<double, std::size_t>{7, 3}));
  const double ties[] = {3, 3, 3};
  EXPECT_EQ(kth_excluding(ties, 1, 0).second, 1u);
  EXPECT_THROW(kth_excluding(v, 4, 0), std::invalid_argument);
}

TEST(ProbNonzero, ClosedFormOnAHandExample) {
  const double clean[] = {1.0, 0.0, 0.5};
  const double noisy[] = {1.3, 0.2, 0.4};
  const double sd[] = {0.5, 1.0, 2.0};
  // Expert 2 with k=1 must beat 1.3: Φ((0.5 − 1.3)/2).
  EXPECT_NEAR(prob_nonzero(clean, noisy, sd, 1, 2), kernel::std_normal_cdf(-0.4), 1e-15);
  // Expert 0 with k=2 must beat the 2nd largest of {0.2, 0.4}: Φ((1 − 0.2)/0.5).
  EXPECT_NEAR(prob_nonzero(clean, noisy, sd, 2, 0), kernel::std_normal_cdf(1.6), 1e-15);
  EXPECT_EQ(prob_nonzero(clean, noisy, sd, 3, 0), 1.0);
}

TEST(ProbNonzero, MatchesResamplingOneComponent) {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 5, k = 2;
    std::vector<double> clean(n), sd(n), noisy(n);
    for (std::size_t i = 0; i < n; ++i) {
      clean[i] = rng.uniform(-1, 1);
      sd[i] = rng.uniform(0.2, 1.5);
      noisy[i] = clean[i] + sd[i] * rng.normal();
    }
    const std::size_t i = rng.below(n);
    const double p = prob_nonzero(clean, noisy, sd, k, i);
    const int draws = 40000;
    int hits = 0;
    std::vector<double> h = noisy;
    for (int d = 0; d < draws; ++d) {
      h[i] = clean[i] + sd[i] * rng.normal();
      const auto top = top_k_indices(h, k);
      if (std::find(top.begin(), top.end(), i) != top.end()) ++hits;
    }
    const double sigma = std::sqrt(p * (1 - p) / draws);
    EXPECT_NEAR(hits / static_cast<double>(draws), p, 4 * sigma + 1e-12) << "trial " << trial;
  }
}

TEST(Load, SumsProbabilitiesOverTheBatchAndNeedsNoise) {
  Rng rng(22);
  GatingParams p = GatingParams::zeros(3, 4, 2);
  p.w_gate = uniform_sample(3, 4, 1.0, rng);
  p.w_noise = uniform_sample(3, 4, 0.5, rng);
  Tape t;
  ParamBinder bind(t);
  const GateResult g = noisy_topk_gate(t.constant(uniform_sample(10, 3, 1.0, rng)), p, bind, rng);
  const Matrix probs = prob_in_top_k(g).value();
  EXPECT_LT(max_abs_diff(load(g).value(), kernel::col_sums(probs)), 1e-15);
  for (double v : probs.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  const GateResult clean = clean_topk_gate(t.constant(Matrix(2, 3)), p, bind);
  EXPECT_THROW(load(clean), std::invalid_argument);
}

TEST(Load, LossGradientMatchesFiniteDifferences) {
  Rng rng(23);
  GatingParams p = GatingParams::zeros(3, 6, 2);
  p.w_gate = uniform_sample(3, 6, 1.0, rng);
  p.w_noise = uniform_sample(3, 6, 0.5, rng);
  Matrix x = uniform_sample(8, 3, 1.0, rng);
  const Matrix noise = gaussian_sample(8, 6, rng);
  Matrix* params[] = {&p.w_gate, &p.w_noise, &x};
  const auto r = check_gradients("load_loss", params, [&](ParamBinder& b) {
    const GateResult g = noisy_topk_gate(b(x), p, b, noise);
    return add(load_loss(g, 0.7), importance_loss(g.gates, 0.3));
  });
  EXPECT_TRUE(r.passed) << r.max_rel_error;
}

TEST(BalanceReport, HardCountsWithoutNoise) {
  const Matrix g = Matrix::from_rows({{1, 0, 0, 0}, {1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}});
  const DispatchPlan plan = build_dispatch(g);
  EXPECT_EQ(hard_load(plan), (std::vector<double>{2, 1, 1, 0}));
  const BalanceReport r = balance_report({2, 1, 1, 0}, hard_load(plan));
  EXPECT_NEAR(r.cv_importance, std::sqrt(0.5) / 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(r.max_over_mean_load, 2.0);
}

}  // namespace
}  // namespace smoe
