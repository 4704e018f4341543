// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

// Differentiable operations on tape variables. Every op computes its value
// with the kernels in kernels.hpp and records the matching backward rule.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "smoe/random.hpp"
#include "smoe/tape.hpp"

namespace smoe {

Var matmul(Var a, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);

/// m (r x c) + bias (1 x c) broadcast over rows.
Var add_row_broadcast(Var m, Var bias);
/// m (r x c) scaled row-wise by col (r x 1).
Var mul_col_broadcast(Var m, Var col);
/// m (r x c) scaled column-wise by row (1 x c).
Var mul_row_broadcast(Var m, Var row);

Var transpose(Var a);

Var relu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var normal_cdf(Var a);

/// Row softmax; -inf entries get exactly zero probability and zero gradient.
Var softmax_rows(Var a);

Var sum(Var a);
Var mean(Var a);
/// 1 x cols column sums.
Var col_sum(Var a);

/// Squared population coefficient of variation over every entry of `a`.
Var cv_squared(Var a);

Var gather_rows(Var a, std::span<const std::size_t> rows);
/// (rows.size() x 1) column holding a(rows[t], col).
Var gather_column(Var a, std::span<const std::size_t> rows, std::size_t col);
/// out (total_rows x cols) where part p's row t is added into row rows[p][t].
/// Parts are accumulated in the order given.
Var scatter_add_rows(std::span<const Var> parts, std::span<const std::vector<std::size_t>> rows,
                     std::size_t total_rows, std::size_t cols);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);

/// Mean token cross-entropy of row-wise softmax(logits) against `targets`.
Var softmax_cross_entropy(Var logits, std::span<const std::size_t> targets);

/// Inverted dropout: zero with probability p, otherwise divide by (1 - p).
Var dropout(Var a, double p, Rng& rng);

}  // namespace smoe
