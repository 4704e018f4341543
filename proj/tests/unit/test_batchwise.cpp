// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "smoe/batchwise.hpp"
#include "smoe/kernels.hpp"

namespace smoe {
namespace {

TEST(Capacity, FloorOfKBatchOverN) {
  EXPECT_EQ(batchwise_capacity(256, 16, 4), 64u);
  const std::size_t before = batchwise_floor_warnings();
  EXPECT_EQ(batchwise_capacity(10, 4, 1), 2u);
  EXPECT_EQ(batchwise_floor_warnings(), before + 1);
  EXPECT_THROW(batchwise_capacity(10, 0, 1), std::invalid_argument);
}

TEST(TopkMask, MarksLargestWithLowerIndexOnTies) {
  const double v[] = {0.2, 0.5, 0.5, 0.1};
  EXPECT_EQ(topk_mask(v, 2), (std::vector<double>{0, 1, 1, 0}));
  EXPECT_EQ(topk_mask(v, 1), (std::vector<double>{0, 1, 0, 0}));
}

TEST(BatchwiseMask, ExactlyMPerColumnMatchingSortOracle) {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t b = 5 + rng.below(20), n = 2 + rng.below(6), m = 1 + rng.below(b);
    const Matrix g = kernel::softmax_rows(uniform_sample(b, n, 2.0, rng));
    const Matrix mask = batchwise_mask(g, m);
    for (std::size_t c = 0; c < n; ++c) {
      std::vector<std::size_t> order(b);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](auto x, auto y) { return g(x, c) > g(y, c); });
      std::vector<double> want(b, 0.0);
      for (std::size_t j = 0; j < m; ++j) want[order[j]] = 1.0;
      for (std::size_t r = 0; r < b; ++r) EXPECT_EQ(mask(r, c), want[r]);
    }
  }
  EXPECT_THROW(batchwise_mask(Matrix(3, 2), 4), std::invalid_argument);
}

TEST(ThresholdMask, IsStrict) {
  const ThresholdVector t{Matrix::from_rows({{0.5, 0.1}})};
  const double x[] = {0.5, 0.2};
  EXPECT_EQ(threshold_mask(x, t), (std::vector<double>{0, 1}));
}

TEST(MaskedGate, RenormalizesAndZeroesEmptyRows) {
  Tape t;
  const Matrix g = Matrix::from_rows({{0.2, 0.3, 0.5}, {0.6, 0.3, 0.1}});
  const Matrix mask = Matrix::from_rows({{1, 1, 0}, {0, 0, 0}});
  const Matrix out = masked_gate(t.constant(g), mask).value();
  EXPECT_NEAR(out(0, 0), 0.4, 1e-15);
  EXPECT_NEAR(out(0, 1), 0.6, 1e-15);
  EXPECT_EQ(out(0, 2), 0.0);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(out(1, c), 0.0);
}

TEST(ThresholdLoss, HandEvaluationAndGradient) {
  // One column, m = 1: batchwise keeps row 0 (0.9). Threshold 0.5 also admits
  // row 1 (0.7), so the loss is (1 − 0)(0.7 − 0.5) = 0.2 with dL/dT = −1.
  const Matrix g = Matrix::from_rows({{0.9}, {0.7}, {0.1}});
  const ThresholdVector t{Matrix::scalar(0.5)};
  const ThresholdLoss l = threshold_loss(g, t, 1);
  EXPECT_NEAR(l.loss, 0.2, 1e-15);
  EXPECT_EQ(l.grad.item(), -1.0);
}

TEST(ThresholdStep, LearnsAThresholdThatReproducesTheBatchMask) {
  Rng rng(42);
  const std::size_t n = 8, b = 64, m = batchwise_capacity(b, n, 2);
  // Fixed per-expert scales so a single threshold separates the top m.
  ThresholdVector t = ThresholdVector::zeros(n);
  double agreement = 0.0;
  for (int step = 0; step < 500; ++step) {
    Matrix logits = uniform_sample(b, n, 2.0, rng);
    for (std::size_t c = 0; c < n; ++c)
      for (std::size_t r = 0; r < b; ++r) logits(r, c) += 0.3 * static_cast<double>(c);
    const Matrix g = kernel::softmax_rows(logits);
    threshold_step(t, g, m, 0.01);
    agreement = mask_agreement(threshold_mask(g, t), batchwise_mask(g, m));
  }
  EXPECT_GT(agreement, 0.9);
}

TEST(BatchwiseGate, EachExpertGetsExactlyM) {
  Rng rng(43);
  GatingParams p = GatingParams::zeros(4, 6, 2, false);
  p.w_gate = uniform_sample(4, 6, 1.0, rng);
  Tape t;
  ParamBinder bind(t);
  const std::size_t m = batchwise_capacity(30, 6, 2);
  const GateResult g = batchwise_gate(t.constant(uniform_sample(30, 4, 1.0, rng)), p, bind, m);
  for (std::size_t c = 0; c < 6; ++c) {
    std::size_t nz = 0;
    for (std::size_t r = 0; r < 30; ++r) nz += g.gates.value()(r, c) > 0.0;
    EXPECT_EQ(nz, m);
  }
}

}  // namespace
}  // namespace smoe
