// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "smoe/batchwise.hpp"

#include <algorithm>
#include <atomic>
#include <numeric>
#include <stdexcept>
#include <string>

#include "smoe/ops.hpp"

namespace smoe {
namespace {

std::atomic<std::size_t> g_floor_warnings{0};

std::vector<std::vector<std::size_t>> selected_per_row(const Matrix& gates) {
  std::vector<std::vector<std::size_t>> out(gates.rows());
  for (std::size_t r = 0; r < gates.rows(); ++r) {
    const auto row = gates.row(r);
    for (std::size_t c = 0; c < row.size(); ++c)
      if (row[c] > 0.0) out[r].push_back(c);
    std::stable_sort(out[r].begin(), out[r].end(),
                     [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
  }
  return out;
}

/// Dense softmax gates for x, masked by mask_fn(dense values).
template <class MaskFn>
GateResult masked_softmax_gate(Var x, const GatingParams& params, ParamBinder& bind,
                               MaskFn mask_fn) {
  if (x.cols() != params.input_dim()) {
    throw ShapeError("masked gating: input " + x.value().shape_str() + " vs w_gate " +
                     params.w_gate.shape_str());
  }
  GateResult res;
  res.clean_logits = matmul(x, bind(params.w_gate));
  res.noisy_logits = res.clean_logits;
  Var dense = softmax_rows(res.clean_logits);
  res.gates = masked_gate(dense, mask_fn(dense.value()));
  res.k = params.k;
  res.topk_indices = selected_per_row(res.gates.value());
  return res;
}

}  // namespace

Var masked_gate(Var gates_dense, const Matrix& mask) {
  const Matrix& g = gates_dense.value();
  require_same_shape(g, mask, "masked_gate");
  Matrix out(g.rows(), g.cols());
  std::vector<double> sums(g.rows(), 0.0);
  for (std::size_t r = 0; r < g.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < g.cols(); ++c) s += g(r, c) * mask(r, c);
    sums[r] = s;
    if (s <= 0.0) continue;
    for (std::size_t c = 0; c < g.cols(); ++c) out(r, c) = g(r, c) * mask(r, c) / s;
  }
  const std::size_t ig = gates_dense.id();
  return gates_dense.tape().record(
      std::move(out), {gates_dense},
      [ig, mask, sums = std::move(sums)](Tape& t, std::size_t self) {
        const Matrix& grad = t.grad(self);
        const Matrix& y = t.value(self);
        Matrix& dx = t.grad_slot(ig);
        for (std::size_t r = 0; r < y.rows(); ++r) {
          if (sums[r] <= 0.0) continue;
          double dot = 0.0;
          for (std::size_t c = 0; c < y.cols(); ++c) dot += grad(r, c) * y(r, c);
          for (std::size_t c = 0; c < y.cols(); ++c)
            dx(r, c) += mask(r, c) / sums[r] * (grad(r, c) - dot);
        }
      });
}

std::vector<double> topk_mask(std::span<const double> v, std::size_t k) {
  std::vector<double> out(v.size(), 0.0);
  for (std::size_t i : top_k_indices(v, k)) out[i] = 1.0;
  return out;
}

Matrix topk_mask(const Matrix& g, std::size_t k) {
  Matrix out(g.rows(), g.cols());
  for (std::size_t r = 0; r < g.rows(); ++r)
    for (std::size_t i : top_k_indices(g.row(r), k)) out(r, i) = 1.0;
  return out;
}

std::size_t batchwise_capacity(std::size_t batch, std::size_t n, std::size_t k) {
  if (n == 0) throw std::invalid_argument("batchwise_capacity: n must be >= 1");
  if ((k * batch) % n != 0) g_floor_warnings.fetch_add(1, std::memory_order_relaxed);
  return k * batch / n;
}

std::size_t batchwise_floor_warnings() noexcept {
  return g_floor_warnings.load(std::memory_order_relaxed);
}

Matrix batchwise_mask(const Matrix& g, std::size_t m) {
  if (m > g.rows()) {
    throw std::invalid_argument("batchwise_mask: m = " + std::to_string(m) +
                                " exceeds batch size " + std::to_string(g.rows()));
  }
  Matrix out(g.rows(), g.cols());
  std::vector<std::size_t> idx(g.rows());
  for (std::size_t c = 0; c < g.cols(); ++c) {
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                        return g(a, c) > g(b, c) || (g(a, c) == g(b, c) && a < b);
                      });
    for (std::size_t t = 0; t < m; ++t) out(idx[t], c) = 1.0;
  }
  return out;
}

std::vector<double> threshold_mask(std::span<const double> x, const ThresholdVector& t) {
  if (x.size() != t.size()) throw ShapeError("threshold_mask: vector and threshold lengths differ");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > t.values[i] ? 1.0 : 0.0;
  return out;
}

Matrix threshold_mask(const Matrix& g, const ThresholdVector& t) {
  if (g.cols() != t.size()) throw ShapeError("threshold_mask: " + g.shape_str() + " vs thresholds");
  Matrix out(g.rows(), g.cols());
  for (std::size_t r = 0; r < g.rows(); ++r)
    for (std::size_t c = 0; c < g.cols(); ++c) out(r, c) = g(r, c) > t.values[c] ? 1.0 : 0.0;
  return out;
}

ThresholdLoss threshold_loss(const Matrix& g, const ThresholdVector& t, std::size_t m) {
  const Matrix tm = threshold_mask(g, t);
  const Matrix bm = batchwise_mask(g, m);
  ThresholdLoss out{0.0, Matrix(1, g.cols())};
  for (std::size_t r = 0; r < g.rows(); ++r) {
    for (std::size_t c = 0; c < g.cols(); ++c) {
      const double diff = tm(r, c) - bm(r, c);
      out.loss += diff * (g(r, c) - t.values[c]);
      out.grad[c] -= diff;
    }
  }
  return out;
}

double threshold_step(ThresholdVector& t, const Matrix& g, std::size_t m, double lr) {
  const ThresholdLoss l = threshold_loss(g, t, m);
  for (std::size_t c = 0; c < t.size(); ++c) t.values[c] -= lr * l.grad[c];
  return l.loss;
}

double mask_agreement(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "mask_agreement");
  if (a.empty()) return 1.0;
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += (a[i] == b[i]) ? 1 : 0;
  return static_cast<double>(same) / static_cast<double>(a.size());
}

GateResult batchwise_gate(Var x, const GatingParams& params, ParamBinder& bind, std::size_t m) {
  return masked_softmax_gate(x, params, bind, [m](const Matrix& g) { return batchwise_mask(g, m); });
}

GateResult threshold_gate(Var x, const GatingParams& params, ParamBinder& bind,
                          const ThresholdVector& t) {
  return masked_softmax_gate(x, params, bind, [&t](const Matrix& g) { return threshold_mask(g, t); });
}

}  // namespace smoe
