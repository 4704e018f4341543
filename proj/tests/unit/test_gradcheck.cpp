// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <set>

#include "smoe/gradcheck.hpp"
#include "smoe/ops.hpp"

namespace smoe {
namespace {

Matrix square_sum(const Matrix& m) {
  double s = 0.0;
  for (double v : m.data()) s += v * v;
  return Matrix::scalar(s);
}

TEST(GradCheck, DetectsAWrongBackwardRule) {
  Matrix a = Matrix::from_rows({{0.3, -0.7}});
  Matrix* params[] = {&a};
  // Correct forward, backward off by a factor of two.
  const auto r = check_gradients("broken", params, [&](ParamBinder& b) {
    Var x = b(a);
    Var y = b.tape().record(square_sum(a), {x}, [x](Tape& t, std::size_t id) {
      Matrix g = x.value();
      for (double& v : g.data()) v *= 4.0 * t.grad(id).item();
      t.accumulate(x.id(), g);
    });
    return y;
  });
  EXPECT_FALSE(r.passed);
  EXPECT_NEAR(r.max_rel_error, 0.5, 1e-6);  // |4x − 2x| / |4x|
}

TEST(GradCheck, PassesOnACorrectRuleAndRestoresParameters) {
  Matrix a = Matrix::from_rows({{0.3, -0.7}, {1.1, 0.2}});
  const Matrix before = a;
  Matrix* params[] = {&a};
  const auto r = check_gradients("square", params,
                                 [&](ParamBinder& b) { return sum(mul(b(a), b(a))); });
  EXPECT_TRUE(r.passed);
  EXPECT_EQ(r.entries, 4u);
  EXPECT_EQ(a, before);
}

TEST(GradCheck, SuiteCoversEveryComponentAndPasses) {
  const auto results = run_gradient_suite(1);
  std::set<std::string> names;
  for (const auto& r : results) {
    EXPECT_TRUE(r.passed) << r.name << " " << r.max_rel_error;
    EXPECT_LT(r.max_rel_error, 1e-4) << r.name;
    names.insert(r.name);
  }
  EXPECT_EQ(names.size(), results.size());
  for (const char* needle : {"softmax", "noisy", "load", "importance", "expert", "hierarchical",
                             "batchwise", "attention"}) {
    bool found = false;
    for (const auto& n : names) found |= n.find(needle) != std::string::npos;
    EXPECT_TRUE(found) << needle;
  }
}

}  // namespace
}  // namespace smoe
