// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "smoe/gradcheck.hpp"
#include "smoe/hierarchical.hpp"
#include "smoe/kernels.hpp"
#include "smoe/ops.hpp"

namespace smoe {
namespace {

void randomize(GatingParams& g, Rng& rng) {
  g.w_gate = uniform_sample(g.input_dim(), g.num_experts(), 1.0, rng);
  g.w_noise = uniform_sample(g.input_dim(), g.num_experts(), 0.3, rng);
}

HierarchicalMoE random_tree(std::size_t d, std::size_t a, std::size_t b, std::size_t kp,
                            std::size_t ks, Rng& rng) {
  HierarchicalMoE h = HierarchicalMoE::create(d, 5, d, a, b, kp, ks, rng);
  randomize(h.primary, rng);
  for (auto& g : h.groups) randomize(g.gating, rng);
  return h;
}

Matrix expert_out(const Expert& e, const Matrix& x) {
  return kernel::matmul(kernel::relu(kernel::matmul(x, e.w1)), e.w2);
}

TEST(Hierarchical, SingleGroupEqualsFlatLayer) {
  Rng rng(31);
  HierarchicalMoE h = random_tree(4, 1, 6, 1, 2, rng);
  h.primary.noisy = false;
  const Matrix x = uniform_sample(10, 4, 1.0, rng);
  HierarchicalNoise noise{Matrix(10, 1), {gaussian_sample(10, 6, rng)}};
  HierarchicalOptions opts;
  opts.frozen_noise = &noise;
  Tape t;
  ParamBinder bind(t);
  const Matrix tree = hierarchical_forward(h, t.constant(x), bind, rng, opts).y.value();
  MoEForwardOptions flat_opts;
  flat_opts.frozen_noise = &noise.secondary[0];
  const Matrix flat = moe_forward(h.groups[0], t.constant(x), bind, rng, flat_opts).y.value();
  EXPECT_LT(max_abs_diff(tree, flat), 1e-10);
}

TEST(Hierarchical, DenseTwoByTwoIsTheDoubleSum) {
  Rng rng(32);
  const HierarchicalMoE h = random_tree(3, 2, 2, 2, 2, rng);
  const Matrix x = uniform_sample(7, 3, 1.0, rng);
  Tape t;
  ParamBinder bind(t);
  const HierarchicalOutput out = hierarchical_forward(h, t.constant(x), bind, rng);
  const Matrix& gp = out.primary.gates.value();
  Matrix want(7, 3);
  for (std::size_t i = 0; i < 2; ++i) {
    ASSERT_TRUE(out.groups[i].has_value());
    const Matrix& gs = out.groups[i]->gates.gates.value();
    const auto& rows = out.primary_plan.rows[i];
    ASSERT_EQ(rows.size(), 7u);
    for (std::size_t j = 0; j < 2; ++j) {
      const Matrix e = expert_out(h.groups[i].experts[j], x);
      for (std::size_t r = 0; r < 7; ++r)
        for (std::size_t c = 0; c < 3; ++c) want(r, c) += gp(r, i) * gs(r, j) * e(r, c);
    }
  }
  EXPECT_LT(max_abs_diff(out.y.value(), want), 1e-10);
  EXPECT_EQ(out.expert_row_evals, 4u * 7u);
}

TEST(Hierarchical, OnlySelectedGroupsAreEvaluated) {
  Rng rng(33);
  HierarchicalMoE h = random_tree(2, 4, 3, 1, 1, rng);
  h.primary.noisy = false;
  h.primary.w_gate = Matrix(2, 4);
  h.primary.w_gate(0, 3) = 20.0;
  const Matrix x(5, 2, 1.0);
  Tape t;
  ParamBinder bind(t);
  const HierarchicalOutput out = hierarchical_forward(h, t.constant(x), bind, rng);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_FALSE(out.groups[i].has_value());
  ASSERT_TRUE(out.groups[3].has_value());
  EXPECT_EQ(out.expert_row_evals, 5u);
}

TEST(Hierarchical, RepeatedCallsDrawFreshSecondaryNoise) {
  Rng rng(34);
  HierarchicalMoE h = random_tree(2, 1, 3, 1, 1, rng);
  const Matrix x(4, 2, 1.0);
  Tape t;
  ParamBinder bind(t);
  const Matrix first = hierarchical_forward(h, t.constant(x), bind, rng).groups[0]->gates.noise;
  const Matrix second = hierarchical_forward(h, t.constant(x), bind, rng).groups[0]->gates.noise;
  EXPECT_GT(max_abs_diff(first, second), 0.0);
}

TEST(Hierarchical, ImportanceIsOuterWeightedSum) {
  const Matrix gp = Matrix::from_rows({{0.25, 0.75}, {1.0, 0.0}});
  const Matrix s0 = Matrix::from_rows({{0.5, 0.5}, {1.0, 0.0}});
  const Matrix s1 = Matrix::from_rows({{0.0, 1.0}, {0.3, 0.7}});
  const Matrix sec[] = {s0, s1};
  const Matrix imp = importance_h(gp, sec);
  EXPECT_EQ(imp, Matrix::from_rows({{0.125 + 1.0, 0.125}, {0.0, 0.75}}));
}

TEST(Hierarchical, LoadCombinesPrimaryAndGroupLoads) {
  Tape t;
  Var primary = t.constant(Matrix::from_rows({{3.0, 1.0}}));
  const Var groups[] = {t.constant(Matrix::from_rows({{2.0, 1.0}})),
                        t.constant(Matrix::from_rows({{0.5, 0.5}}))};
  const std::size_t sizes[] = {3, 1};
  EXPECT_EQ(load_h(primary, groups, sizes).value(),
            Matrix::from_rows({{2.0, 1.0}, {0.5, 0.5}}));
  const std::size_t empty[] = {3, 0};
  EXPECT_EQ(load_h(primary, groups, empty).value(), Matrix::from_rows({{2.0, 1.0}, {0.0, 0.0}}));
}

TEST(Hierarchical, BalanceLossGradientMatchesFiniteDifferences) {
  Rng rng(34);
  HierarchicalMoE h = random_tree(3, 2, 3, 2, 2, rng);
  Matrix x = uniform_sample(6, 3, 1.0, rng);
  HierarchicalNoise noise{gaussian_sample(6, 2, rng),
                          {gaussian_sample(6, 3, rng), gaussian_sample(6, 3, rng)}};
  HierarchicalOptions opts;
  opts.frozen_noise = &noise;
  const Matrix c = uniform_sample(6, 3, 1.0, rng);
  std::vector<Matrix*> params{&x, &h.primary.w_gate, &h.primary.w_noise};
  for (auto& g : h.groups) {
    params.push_back(&g.gating.w_gate);
    params.push_back(&g.gating.w_noise);
    for (auto& e : g.experts) params.push_back(&e.w1);
  }
  const auto r = check_gradients("hierarchical", params, [&](ParamBinder& b) {
    Rng unused(0);
    const HierarchicalOutput out = hierarchical_forward(h, b(x), b, unused, opts);
    return add(sum(mul(out.y, b.tape().constant(c))), hierarchical_balance_loss(out, 0.5, 0.5));
  });
  EXPECT_TRUE(r.passed) << r.max_rel_error;
}

TEST(Hierarchical, ValidateRejectsMismatchedPrimary) {
  Rng rng(35);
  HierarchicalMoE h = HierarchicalMoE::create(3, 4, 3, 2, 2, 1, 1, rng);
  EXPECT_NO_THROW(h.validate());
  EXPECT_EQ(h.total_experts(), 4u);
  h.primary = GatingParams::zeros(3, 3, 1);
  EXPECT_THROW(h.validate(), ShapeError);
}

}  // namespace
}  // namespace smoe
