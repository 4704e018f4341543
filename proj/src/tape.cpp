// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "smoe/tape.hpp"

#include <algorithm>

namespace smoe {

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::push(Node node) {
  retained_ += node.value.size();
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) { return push(Node{std::move(value), {}, false, {}}); }

Var Tape::variable(Matrix value) { return push(Node{std::move(value), {}, true, {}}); }

Var Tape::record(Matrix value, std::span<const Var> inputs, Backward backward) {
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [this](const Var& v) { return nodes_[v.id()].requires_grad; });
  if (!needs) backward = nullptr;
  return push(Node{std::move(value), {}, needs, std::move(backward)});
}

void Tape::backward(Var root) {
  if (root.tape_ != this) throw std::invalid_argument("Tape::backward: root from another tape");
  const Matrix& v = nodes_[root.id()].value;
  if (v.rows() != 1 || v.cols() != 1) {
    throw ShapeError("Tape::backward: root must be 1x1, got " + v.shape_str());
  }
  for (auto& node : nodes_) node.grad = Matrix();
  if (!nodes_[root.id()].requires_grad) return;
  grad_slot(root.id())[0] = 1.0;
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.requires_grad || node.grad.empty() || !node.backward) continue;
    node.backward(*this, id);
  }
}

const Matrix& Tape::grad(std::size_t id) const {
  const Node& node = nodes_[id];
  if (node.grad.empty()) node.grad = Matrix(node.value.rows(), node.value.cols());
  return node.grad;
}

Matrix& Tape::grad_slot(std::size_t id) {
  Node& node = nodes_[id];
  if (node.grad.empty()) node.grad = Matrix(node.value.rows(), node.value.cols());
  return node.grad;
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  if (!nodes_[id].requires_grad) return;
  Matrix& slot = grad_slot(id);
  require_same_shape(slot, g, "Tape::accumulate");
  auto dst = slot.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Var ParamBinder::operator()(const Matrix& param) {
  for (const auto& [p, v] : bound_)
    if (p == &param) return v;
  Var v = tape_->variable(param);
  bound_.emplace_back(&param, v);
  return v;
}

const Matrix* ParamBinder::grad_of(const Matrix& param) const {
  for (const auto& [p, v] : bound_)
    if (p == &param) return &v.grad();
  return nullptr;
}

}  // namespace smoe
