// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

#include "smoe/matrix.hpp"

namespace smoe {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  bool requires_grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

  std::size_t id() const noexcept { return id_; }
  Tape& tape() const noexcept { return *tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode differentiation record.
///
/// Nodes are appended in evaluation order, which is a topological order, so
/// backward() walks them from last to first. A node's backward closure runs
/// only after every consumer has added its contribution to the node's grad.
/// One tape per training step; not thread-safe.
class Tape {
 public:
  /// Receives the tape and the id of the node being differentiated.
  using Backward = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);

  /// Appends an op result. The node needs a gradient iff any input does; when
  /// none do, `backward` is discarded.
  Var record(Matrix value, std::span<const Var> inputs, Backward backward);
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  /// Seeds d(root)/d(root) = 1 and propagates. `root` must be 1 x 1.
  void backward(Var root);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient of the last backward() root w.r.t. node `id`; zeros when the
  /// node did not influence the root.
  const Matrix& grad(std::size_t id) const;

  /// Mutable gradient slot, allocated as zeros on first use.
  Matrix& grad_slot(std::size_t id);

  /// Adds `g` into node `id`'s gradient when that node requires one.
  void accumulate(std::size_t id, const Matrix& g);

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Values held alive by the tape for the backward pass: node values plus
  /// buffers registered by ops via note_retained().
  std::size_t retained_elements() const noexcept { return retained_; }
  void note_retained(std::size_t elements) noexcept { retained_ += elements; }

 private:
  struct Node {
    Matrix value;
    mutable Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  std::size_t retained_ = 0;
};

/// Binds parameter matrices to tape leaves, at most once per parameter, and
/// remembers the pairing so gradients can be read back after backward().
class ParamBinder {
 public:
  explicit ParamBinder(Tape& tape) : tape_(&tape) {}

  Var operator()(const Matrix& param);
  Tape& tape() const noexcept { return *tape_; }

  /// (parameter, leaf) pairs in binding order.
  const std::vector<std::pair<const Matrix*, Var>>& bound() const noexcept { return bound_; }
  /// Gradient for `param`, or nullptr if it was never bound on this tape.
  const Matrix* grad_of(const Matrix& param) const;

 private:
  Tape* tape_;
  std::vector<std::pair<const Matrix*, Var>> bound_;
};

}  // namespace smoe
