// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

// Central finite-difference checks of tape gradients, and a fixed suite that
// covers every differentiable op and composite in the library.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "smoe/matrix.hpp"
#include "smoe/tape.hpp"

namespace smoe {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor for the relative error, so entries whose true
  /// gradient is zero are judged on absolute error instead.
  double scale_floor = 1e-3;
};

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t entries = 0;
  bool passed = false;
};

/// Builds a scalar loss on a fresh tape. Parameters must be bound through
/// the binder so their gradients can be read back.
using LossBuilder = std::function<Var(ParamBinder&)>;

/// |analytic − numeric| / max(|analytic|, |numeric|, scale_floor), maximized
/// over every entry of every parameter. Parameters are perturbed in place and
/// restored.
GradCheckResult check_gradients(std::string name, std::span<Matrix* const> params,
                                const LossBuilder& build, const GradCheckOptions& opts = {});

/// Runs the built-in suite on random inputs in [-2, 2] derived from `seed`.
std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed,
                                                const GradCheckOptions& opts = {});

}  // namespace smoe
