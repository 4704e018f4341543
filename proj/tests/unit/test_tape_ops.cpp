// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "smoe/gradcheck.hpp"
#include "smoe/kernels.hpp"
#include "smoe/ops.hpp"
#include "smoe/random.hpp"

namespace smoe {
namespace {

TEST(Tape, SharedNodeAccumulates) {
  Tape t;
  Var x = t.variable(Matrix::scalar(3.0));
  t.backward(add(x, x));
  EXPECT_EQ(x.grad().item(), 2.0);
}

TEST(Tape, BackwardRequiresScalarRoot) {
  Tape t;
  Var x = t.variable(Matrix(2, 2));
  EXPECT_THROW(t.backward(x), ShapeError);
}

TEST(Tape, ConstantsCarryNoGradient) {
  Tape t;
  Var c = t.constant(Matrix::scalar(2.0));
  Var x = t.variable(Matrix::scalar(5.0));
  Var y = mul(c, x);
  EXPECT_FALSE(c.requires_grad());
  EXPECT_TRUE(y.requires_grad());
  t.backward(y);
  EXPECT_EQ(x.grad().item(), 2.0);
  EXPECT_EQ(c.grad().item(), 0.0);
}

TEST(Tape, ReverseOrderOnADiamond) {
  // y = (x·x) + tanh(x·x): the shared product must collect both branches.
  Tape t;
  Var x = t.variable(Matrix::scalar(0.4));
  Var sq = mul(x, x);
  t.backward(add(sq, tanh(sq)));
  const double s = 0.16, th = std::tanh(s);
  EXPECT_NEAR(x.grad().item(), 2 * 0.4 * (1.0 + (1.0 - th * th)), 1e-15);
}

TEST(Tape, BackwardTwiceRecomputesFromScratch) {
  Tape t;
  Var x = t.variable(Matrix::scalar(1.5));
  Var y = mul(x, x);
  t.backward(y);
  t.backward(y);
  EXPECT_DOUBLE_EQ(x.grad().item(), 3.0);
}

TEST(ParamBinder, BindsEachParameterOnce) {
  Tape t;
  ParamBinder bind(t);
  const Matrix w = Matrix::from_rows({{1.0, 2.0}});
  Var a = bind(w), b = bind(w);
  EXPECT_EQ(a.id(), b.id());
  t.backward(sum(add(a, b)));
  ASSERT_NE(bind.grad_of(w), nullptr);
  EXPECT_EQ(*bind.grad_of(w), Matrix::from_rows({{2.0, 2.0}}));
  const Matrix other(1, 1);
  EXPECT_EQ(bind.grad_of(other), nullptr);
}

TEST(Ops, MatmulGradientAgainstFiniteDifferences) {
  Rng rng(11);
  Matrix a = uniform_sample(3, 4, 2.0, rng), b = uniform_sample(4, 2, 2.0, rng);
  Matrix* params[] = {&a, &b};
  GradCheckOptions opts;
  opts.tolerance = 1e-6;
  const auto r = check_gradients("matmul", params,
                                 [&](ParamBinder& p) { return sum(matmul(p(a), p(b))); }, opts);
  EXPECT_TRUE(r.passed) << r.max_rel_error;
}

TEST(Ops, ElementwiseBackwardRulesAgainstFiniteDifferences) {
  Rng rng(12);
  Matrix a = uniform_sample(2, 5, 2.0, rng), b = uniform_sample(2, 5, 2.0, rng);
  Matrix* params[] = {&a, &b};
  GradCheckOptions opts;
  opts.tolerance = 1e-6;
  const auto r = check_gradients(
      "elementwise", params,
      [&](ParamBinder& p) {
        Var x = p(a), y = p(b);
        return add(mean(mul(relu(x), sigmoid(y))), sum(scale(sub(tanh(x), y), 0.3)));
      },
      opts);
  EXPECT_TRUE(r.passed) << r.max_rel_error;
}

TEST(Ops, SoftmaxCrossEntropyOfUniformLogitsIsLogVocab) {
  Tape t;
  Var logits = t.variable(Matrix(4, 10));
  const std::size_t targets[] = {0, 3, 9, 2};
  Var ce = softmax_cross_entropy(logits, targets);
  EXPECT_NEAR(ce.value().item(), std::log(10.0), 1e-15);
  t.backward(ce);
  EXPECT_NEAR(logits.grad()(1, 3), (0.1 - 1.0) / 4.0, 1e-15);
  EXPECT_NEAR(logits.grad()(1, 4), 0.1 / 4.0, 1e-15);
}

TEST(Ops, DropoutScalesSurvivorsAndIsOffAtZero) {
  Tape t;
  Var x = t.variable(Matrix(50, 40, 1.0));
  Rng rng(2);
  EXPECT_EQ(dropout(x, 0.0, rng).id(), x.id());
  const Matrix y = dropout(x, 0.25, rng).value();
  std::size_t zeros = 0;
  for (double v : y.data()) {
    if (v == 0.0) ++zeros;
    else EXPECT_DOUBLE_EQ(v, 1.0 / 0.75);
  }
  EXPECT_NEAR(static_cast<double>(zeros) / y.size(), 0.25, 0.03);
}

TEST(Ops, ScatterAddRowsAccumulatesRepeatedTargets) {
  Tape t;
  Var p0 = t.variable(Matrix::from_rows({{1, 2}, {3, 4}}));
  Var p1 = t.variable(Matrix::from_rows({{10, 20}}));
  const Var parts[] = {p0, p1};
  const std::vector<std::size_t> rows[] = {{0, 2}, {2}};
  const Matrix out = scatter_add_rows(parts, rows, 3, 2).value();
  EXPECT_EQ(out, Matrix::from_rows({{1, 2}, {0, 0}, {13, 24}}));
}

TEST(Ops, MixedTapesAreRejected) {
  Tape t1, t2;
  Var a = t1.variable(Matrix(1, 1)), b = t2.variable(Matrix(1, 1));
  EXPECT_THROW(add(a, b), std::invalid_argument);
}

}  // namespace
}  // namespace smoe
