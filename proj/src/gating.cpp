// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "smoe/gating.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

#include "smoe/kernels.hpp"
#include "smoe/ops.hpp"

namespace smoe {

GatingParams GatingParams::zeros(std::size_t input_dim, std::size_t num_experts, std::size_t k,
                                 bool noisy) {
  GatingParams p{Matrix(input_dim, num_experts), Matrix(input_dim, num_experts), k, noisy};
  p.validate();
  return p;
}

void GatingParams::validate() const {
  require_same_shape(w_gate, w_noise, "GatingParams");
  if (k == 0) throw std::invalid_argument("GatingParams: k must be >= 1");
  if (k > num_experts()) {
    throw std::invalid_argument("GatingParams: k = " + std::to_string(k) + " exceeds n = " +
                                std::to_string(num_experts()));
  }
}

std::vector<std::size_t> top_k_indices(std::span<const double> v, std::size_t k) {
  if (k == 0) throw std::invalid_argument("top_k: k must be >= 1");
  if (k > v.size()) throw std::invalid_argument("top_k: k exceeds vector length");
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) { return v[a] > v[b] || (v[a] == v[b] && a < b); });
  idx.resize(k);
  return idx;
}

std::vector<double> keep_top_k(std::span<const double> v, std::size_t k) {
  std::vector<double> out(v.size(), kNegInf);
  for (std::size_t i : top_k_indices(v, k)) out[i] = v[i];
  return out;
}

Var keep_top_k(Var v, std::size_t k) {
  const Matrix& in = v.value();
  Matrix out(in.rows(), in.cols(), kNegInf);
  std::vector<std::vector<std::size_t>> kept(in.rows());
  for (std::size_t r = 0; r < in.rows(); ++r) {
    kept[r] = top_k_indices(in.row(r), k);
    for (std::size_t c : kept[r]) out(r, c) = in(r, c);
  }
  const std::size_t iv = v.id();
  return v.tape().record(std::move(out), {v}, [iv, kept = std::move(kept)](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& dx = t.grad_slot(iv);
    for (std::size_t r = 0; r < kept.size(); ++r)
      for (std::size_t c : kept[r]) dx(r, c) += g(r, c);
  });
}

namespace {

void require_input(Var x, const GatingParams& params, const char* what) {
  if (x.cols() != params.input_dim()) {
    throw ShapeError(std::string(what) + ": input " + x.value().shape_str() + " vs w_gate " +
                     params.w_gate.shape_str());
  }
}

GateResult finish(GateResult res, std::size_t k) {
  const Matrix& h = res.noisy_logits.value();
  res.k = k;
  res.topk_indices.resize(h.rows());
  for (std::size_t r = 0; r < h.rows(); ++r) res.topk_indices[r] = top_k_indices(h.row(r), k);
  res.gates = softmax_rows(keep_top_k(res.noisy_logits, k));
  return res;
}

}  // namespace

Var softmax_gate(Var x, const GatingParams& params, ParamBinder& bind) {
  require_input(x, params, "softmax_gate");
  return softmax_rows(matmul(x, bind(params.w_gate)));
}

GateResult noisy_topk_gate(Var x, const GatingParams& params, ParamBinder& bind,
                           const Matrix& noise) {
  params.validate();
  require_input(x, params, "noisy_topk_gate");
  if (noise.rows() != x.rows() || noise.cols() != params.num_experts()) {
    throw ShapeError("noisy_topk_gate: noise " + noise.shape_str() + " for batch " +
                     std::to_string(x.rows()) + " and n = " + std::to_string(params.num_experts()));
  }
  GateResult res;
  res.clean_logits = matmul(x, bind(params.w_gate));
  res.noise_stddev = softplus(matmul(x, bind(params.w_noise)));
  res.noise = noise;
  res.noisy_logits = add(res.clean_logits, mul(x.tape().constant(noise), res.noise_stddev));
  return finish(std::move(res), params.k);
}

GateResult clean_topk_gate(Var x, const GatingParams& params, ParamBinder& bind) {
  params.validate();
  require_input(x, params, "clean_topk_gate");
  GateResult res;
  res.clean_logits = matmul(x, bind(params.w_gate));
  res.noisy_logits = res.clean_logits;
  return finish(std::move(res), params.k);
}

GateResult noisy_topk_gate(Var x, const GatingParams& params, ParamBinder& bind, Rng& rng,
                           bool apply_noise) {
  if (!params.noisy || !apply_noise) return clean_topk_gate(x, params, bind);
  return noisy_topk_gate(x, params, bind, gaussian_sample(x.rows(), params.num_experts(), rng));
}

}  // namespace smoe
