// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "smoe/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "smoe/attention.hpp"
#include "smoe/balance.hpp"
#include "smoe/batchwise.hpp"
#include "smoe/gating.hpp"
#include "smoe/hierarchical.hpp"
#include "smoe/moe_layer.hpp"
#include "smoe/ops.hpp"
#include "smoe/random.hpp"

namespace smoe {

GradCheckResult check_gradients(std::string name, std::span<Matrix* const> params,
                                const LossBuilder& build, const GradCheckOptions& opts) {
  GradCheckResult result;
  result.name = std::move(name);

  std::vector<Matrix> analytic;
  {
    Tape tape;
    ParamBinder bind(tape);
    for (Matrix* p : params) bind(*p);
    tape.backward(build(bind));
    for (Matrix* p : params) analytic.push_back(*bind.grad_of(*p));
  }

  auto eval = [&] {
    Tape tape;
    ParamBinder bind(tape);
    for (Matrix* p : params) bind(*p);
    return build(bind).value().item();
  };

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Matrix& p = *params[pi];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p[i];
      p[i] = saved + opts.step;
      const double up = eval();
      p[i] = saved - opts.step;
      const double down = eval();
      p[i] = saved;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double a = analytic[pi][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), opts.scale_floor});
      const double err = std::abs(a - numeric) / denom;
      if (!(err <= result.max_rel_error)) result.max_rel_error = err;  // NaN sticks
      ++result.entries;
    }
  }
  result.passed = result.max_rel_error < opts.tolerance;
  return result;
}

namespace {

// Scalar loss Σ out ⊙ r with fixed random weights r, so every output entry
// contributes with a distinct coefficient.
Var project(Var out, const Matrix& r) { return sum(mul(out, out.tape().constant(r))); }

class Suite {
 public:
  Suite(std::uint64_t seed, const GradCheckOptions& opts) : rng_(seed), opts_(opts) {}

  Matrix rand(std::size_t r, std::size_t c, double limit = 2.0) {
    return uniform_sample(r, c, limit, rng_);
  }
  Matrix positive(std::size_t r, std::size_t c) {
    Matrix m = rand(r, c, 0.75);
    for (double& v : m.data()) v += 1.25;
    return m;
  }
  Rng& rng() { return rng_; }

  void run(std::string name, std::vector<Matrix*> params, const LossBuilder& build) {
    results_.push_back(check_gradients(std::move(name), params, build, opts_));
  }

  std::vector<GradCheckResult> take() { return std::move(results_); }

 private:
  Rng rng_;
  GradCheckOptions opts_;
  std::vector<GradCheckResult> results_;
};

void kernel_cases(Suite& s) {
  Matrix a = s.rand(3, 4), b = s.rand(4, 2), c = s.rand(3, 4);
  const Matrix r34 = s.rand(3, 4), r32 = s.rand(3, 2), r43 = s.rand(4, 3);
  const Matrix r35 = s.rand(3, 5), r44 = s.rand(4, 4);

  s.run("matmul", {&a, &b}, [&](ParamBinder& p) { return project(matmul(p(a), p(b)), r32); });
  s.run("add", {&a, &c}, [&](ParamBinder& p) { return project(add(p(a), p(c)), r34); });
  s.run("sub", {&a, &c}, [&](ParamBinder& p) { return project(sub(p(a), p(c)), r34); });
  s.run("mul", {&a, &c}, [&](ParamBinder& p) { return project(mul(p(a), p(c)), r34); });
  s.run("mul_shared_operand", {&a},
        [&](ParamBinder& p) { return project(mul(p(a), p(a)), r34); });
  s.run("scale", {&a}, [&](ParamBinder& p) { return project(scale(p(a), -1.7), r34); });
  s.run("relu", {&a}, [&](ParamBinder& p) { return project(relu(p(a)), r34); });
  s.run("tanh", {&a}, [&](ParamBinder& p) { return project(tanh(p(a)), r34); });
  s.run("sigmoid", {&a}, [&](ParamBinder& p) { return project(sigmoid(p(a)), r34); });
  s.run("softplus", {&a}, [&](ParamBinder& p) { return project(softplus(p(a)), r34); });
  s.run("normal_cdf", {&a}, [&](ParamBinder& p) { return project(normal_cdf(p(a)), r34); });
  s.run("softmax_rows", {&a},
        [&](ParamBinder& p) { return project(softmax_rows(p(a)), r34); });
  s.run("sum", {&a}, [&](ParamBinder& p) { return sum(mul(p(a), p(a))); });
  s.run("mean", {&a}, [&](ParamBinder& p) { return mean(tanh(p(a))); });
  s.run("col_sum", {&a}, [&](ParamBinder& p) {
    return project(col_sum(p(a)), Matrix::from_rows({{0.3, -1.1, 0.7, 2.0}}));
  });
  Matrix pos = s.positive(2, 5);
  s.run("cv_squared", {&pos}, [&](ParamBinder& p) { return cv_squared(p(pos)); });

  Matrix bias = s.rand(1, 4), col = s.rand(3, 1);
  s.run("add_row_broadcast", {&a, &bias},
        [&](ParamBinder& p) { return project(add_row_broadcast(p(a), p(bias)), r34); });
  s.run("mul_col_broadcast", {&a, &col},
        [&](ParamBinder& p) { return project(mul_col_broadcast(p(a), p(col)), r34); });
  s.run("mul_row_broadcast", {&a, &bias},
        [&](ParamBinder& p) { return project(mul_row_broadcast(p(a), p(bias)), r34); });
  s.run("transpose", {&a}, [&](ParamBinder& p) { return project(transpose(p(a)), r43); });

  const std::vector<std::size_t> picks = {2, 0, 2};
  s.run("gather_rows", {&a},
        [&](ParamBinder& p) { return project(gather_rows(p(a), picks), r34); });
  s.run("gather_column", {&a}, [&](ParamBinder& p) {
    return project(gather_column(p(a), picks, 1), Matrix::from_rows({{0.5}, {-1.0}, {2.0}}));
  });
  Matrix part0 = s.rand(2, 4), part1 = s.rand(1, 4);
  s.run("scatter_add_rows", {&part0, &part1}, [&](ParamBinder& p) {
    const Var parts[] = {p(part0), p(part1)};
    const std::vector<std::size_t> rows[] = {{0, 2}, {2}};
    return project(scatter_add_rows(parts, rows, 3, 4), r34);
  });
  s.run("concat_cols", {&a, &col}, [&](ParamBinder& p) {
    const Var parts[] = {p(col), p(a)};
    return project(concat_cols(parts), r35);
  });
  s.run("concat_rows", {&a, &bias}, [&](ParamBinder& p) {
    const Var parts[] = {p(a), p(bias)};
    return project(concat_rows(parts), r44);
  });
  const std::vector<std::size_t> targets = {1, 3, 0};
  s.run("softmax_cross_entropy", {&a},
        [&](ParamBinder& p) { return softmax_cross_entropy(p(a), targets); });
  s.run("dropout", {&a}, [&](ParamBinder& p) {
    Rng fixed(17);
    return project(dropout(p(a), 0.3, fixed), r34);
  });
  s.run("keep_top_k_softmax", {&a},
        [&](ParamBinder& p) { return project(softmax_rows(keep_top_k(p(a), 2)), r34); });
}

void gating_cases(Suite& s) {
  const std::size_t batch = 5, in = 4, n = 6, k = 2;
  Matrix x = s.rand(batch, in);
  GatingParams g = GatingParams::zeros(in, n, k, true);
  g.w_gate = s.rand(in, n);
  g.w_noise = s.rand(in, n, 0.5);
  const Matrix noise = gaussian_sample(batch, n, s.rng());
  const Matrix r = s.rand(batch, n);

  s.run("softmax_gate", {&x, &g.w_gate},
        [&](ParamBinder& p) { return project(softmax_gate(p(x), g, p), r); });
  s.run("noisy_topk_gate_frozen_noise", {&x, &g.w_gate, &g.w_noise},
        [&](ParamBinder& p) { return project(noisy_topk_gate(p(x), g, p, noise).gates, r); });
  s.run("clean_topk_gate", {&x, &g.w_gate},
        [&](ParamBinder& p) { return project(clean_topk_gate(p(x), g, p).gates, r); });

  s.run("importance_loss", {&x, &g.w_gate, &g.w_noise}, [&](ParamBinder& p) {
    return importance_loss(noisy_topk_gate(p(x), g, p, noise).gates, 0.7);
  });
  s.run("load_loss", {&x, &g.w_gate, &g.w_noise}, [&](ParamBinder& p) {
    return load_loss(noisy_topk_gate(p(x), g, p, noise), 0.7);
  });
  s.run("prob_in_top_k", {&x, &g.w_gate, &g.w_noise}, [&](ParamBinder& p) {
    return project(prob_in_top_k(noisy_topk_gate(p(x), g, p, noise)), r);
  });

  Matrix dense = s.rand(batch, n);
  const Matrix mask = topk_mask(dense, 3);
  s.run("masked_gate", {&dense},
        [&](ParamBinder& p) { return project(masked_gate(softmax_rows(p(dense)), mask), r); });

  Matrix xb = s.rand(8, in);
  const Matrix rb = s.rand(8, n);
  s.run("batchwise_gate", {&xb, &g.w_gate},
        [&](ParamBinder& p) { return project(batchwise_gate(p(xb), g, p, 3).gates, rb); });
  ThresholdVector t = ThresholdVector::zeros(n);
  for (double& v : t.values.data()) v = 0.8 / static_cast<double>(n);
  s.run("threshold_gate", {&xb, &g.w_gate},
        [&](ParamBinder& p) { return project(threshold_gate(p(xb), g, p, t).gates, rb); });
  s.run("batchwise_importance_loss", {&xb, &g.w_gate}, [&](ParamBinder& p) {
    return importance_loss(batchwise_gate(p(xb), g, p, 3).gates, 0.5);
  });
}

void moe_cases(Suite& s) {
  const std::size_t batch = 6, in = 3, hidden = 4, out = 3, n = 4, k = 2;
  Rng init = s.rng().split(1);
  MoELayer layer = MoELayer::create(in, hidden, out, n, k, init, true);
  layer.gating.w_gate = s.rand(in, n);
  layer.gating.w_noise = s.rand(in, n, 0.5);
  layer.sigmoid_output = true;
  Matrix x = s.rand(batch, in);
  const Matrix noise = gaussian_sample(batch, n, s.rng());
  const Matrix r = s.rand(batch, out);

  Expert& e = layer.experts[0];
  for (bool recompute : {false, true}) {
    s.run(recompute ? "expert_forward_recompute" : "expert_forward", {&x, &e.w1, &e.w2},
          [&, recompute](ParamBinder& p) { return project(expert_forward(e, p(x), p, recompute), r); });
  }

  std::vector<Matrix*> params = {&x, &layer.gating.w_gate, &layer.gating.w_noise};
  for (Expert& ex : layer.experts) {
    params.push_back(&ex.w1);
    params.push_back(&ex.w2);
  }
  s.run("moe_forward_with_balance_losses", params, [&](ParamBinder& p) {
    Rng unused(0);
    MoEForwardOptions opts;
    opts.frozen_noise = &noise;
    MoEOutput o = moe_forward(layer, p(x), p, unused, opts);
    return add(project(o.y, r), add(importance_loss(o.gates.gates, 0.3), load_loss(o.gates, 0.3)));
  });

  MoELayer bw = layer;
  bw.mode = GatingMode::kBatchwise;
  bw.gating.noisy = false;
  std::vector<Matrix*> bw_params = {&x, &bw.gating.w_gate};
  for (Expert& ex : bw.experts) {
    bw_params.push_back(&ex.w1);
    bw_params.push_back(&ex.w2);
  }
  s.run("moe_forward_batchwise", bw_params, [&](ParamBinder& p) {
    Rng unused(0);
    MoEOutput o = moe_forward(bw, p(x), p, unused);
    return add(project(o.y, r), importance_loss(o.gates.gates, 0.3));
  });
}

void hierarchical_cases(Suite& s) {
  const std::size_t batch = 8, in = 3, hidden = 3, out = 2, a = 2, b = 3;
  Rng init = s.rng().split(2);
  HierarchicalMoE h = HierarchicalMoE::create(in, hidden, out, a, b, 1, 2, init, true);
  h.primary.w_gate = s.rand(in, a);
  h.primary.w_noise = s.rand(in, a, 0.5);
  for (MoELayer& g : h.groups) {
    g.gating.w_gate = s.rand(in, b);
    g.gating.w_noise = s.rand(in, b, 0.5);
  }
  Matrix x = s.rand(batch, in);
  HierarchicalNoise noise;
  noise.primary = gaussian_sample(batch, a, s.rng());
  for (std::size_t i = 0; i < a; ++i) noise.secondary.push_back(gaussian_sample(batch, b, s.rng()));
  const Matrix r = s.rand(batch, out);

  std::vector<Matrix*> params = {&x, &h.primary.w_gate, &h.primary.w_noise};
  for (MoELayer& g : h.groups) {
    params.push_back(&g.gating.w_gate);
    params.push_back(&g.gating.w_noise);
    for (Expert& e : g.experts) {
      params.push_back(&e.w1);
      params.push_back(&e.w2);
    }
  }
  s.run("hierarchical_forward_with_balance_losses", params, [&](ParamBinder& p) {
    Rng unused(0);
    HierarchicalOptions opts;
    opts.frozen_noise = &noise;
    HierarchicalOutput o = hierarchical_forward(h, p(x), p, unused, opts);
    return add(project(o.y, r), hierarchical_balance_loss(o, 0.4, 0.4));
  });
}

void attention_cases(Suite& s) {
  const std::size_t src = 3, tgt = 4, att = 5;
  Matrix u = s.rand(src, att, 1.0), w = s.rand(tgt, att, 1.0), v = s.rand(1, att);
  Matrix x = s.rand(1, src), y = s.rand(1, tgt);
  Matrix xs = s.rand(3, src), ys = s.rand(4, tgt);
  const Matrix r = s.rand(3, 4);

  s.run("attention_gnmt", {&x, &y, &u, &w, &v},
        [&](ParamBinder& p) { return attention_gnmt(p(x), p(y), p(u), p(w), p(v)); });
  s.run("attention_factored", {&x, &y, &u, &w, &v},
        [&](ParamBinder& p) { return attention_factored(p(x), p(y), p(u), p(w), p(v)); });
  s.run("attention_factored_batched", {&xs, &ys, &u, &w, &v}, [&](ParamBinder& p) {
    return project(attention_factored_batched(p(xs), p(ys), p(u), p(w), p(v)), r);
  });
}

}  // namespace

std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed, const GradCheckOptions& opts) {
  Suite s(seed, opts);
  kernel_cases(s);
  gating_cases(s);
  moe_cases(s);
  hierarchical_cases(s);
  attention_cases(s);
  return s.take();
}

}  // namespace smoe
