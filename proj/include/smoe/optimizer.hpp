// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "smoe/matrix.hpp"

namespace smoe {

/// Linear warmup to base_lr, then base_lr · sqrt(warmup / step).
struct LrSchedule {
  double base_lr = 1e-3;
  std::size_t warmup_steps = 1000;

  /// Throws std::invalid_argument for step 0.
  double at(std::size_t step) const;
};

inline double lr_at(const LrSchedule& schedule, std::size_t step) { return schedule.at(step); }

/// Row and column exponential averages standing in for a full matrix of
/// squared-gradient averages.
struct FactoredMoment {
  std::vector<double> row_avg;
  std::vector<double> col_avg;

  static FactoredMoment zeros(std::size_t rows, std::size_t cols) {
    return {std::vector<double>(rows, 0.0), std::vector<double>(cols, 0.0)};
  }
  std::size_t size() const noexcept { return row_avg.size() + col_avg.size(); }
};

/// row_avg ← β₂·row_avg + (1−β₂)·row_means(grad_sq), col_avg likewise.
void factored_second_moment_update(FactoredMoment& state, const Matrix& grad_sq, double beta2);

/// outer(row_avg, col_avg) / mean(row_avg), each average first divided by
/// `bias_correction`. A single row or column reproduces the other vector as is.
Matrix reconstruct_second_moment(const FactoredMoment& state, double bias_correction = 1.0);

enum class FactorMode { kAuto, kOn, kOff };

struct AdamConfig {
  double beta1 = 0.0;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  FactorMode factored = FactorMode::kAuto;
  /// kAuto factors 2-D parameters with at least this many entries.
  std::size_t factor_min_elements = 2048;
  /// Added to squared gradients in factored mode so the averages stay positive.
  double grad_sq_floor = 1e-30;
};

struct ParamState {
  std::size_t step = 0;
  bool factored = false;
  Matrix first_moment;   ///< empty when beta1 == 0
  Matrix second_moment;  ///< full mode only
  FactoredMoment factors;

  std::size_t first_moment_size() const noexcept { return first_moment.size(); }
  std::size_t second_moment_size() const noexcept {
    return factored ? factors.size() : second_moment.size();
  }
};

bool should_factor(const AdamConfig& cfg, const Matrix& param);
ParamState make_state(const AdamConfig& cfg, const Matrix& param);

/// One bias-corrected Adam update. With beta1 == 0 the raw gradient is used in
/// place of a first moment; in factored mode the denominator is sqrt(V̂) + ε.
void adam_step(Matrix& param, const Matrix& grad, ParamState& state, const AdamConfig& cfg,
               double lr);

/// Adam over a set of named parameters with a shared learning-rate schedule.
class Adam {
 public:
  Adam(AdamConfig cfg, LrSchedule schedule) : cfg_(cfg), schedule_(schedule) {}

  /// Advances the global step; returns the learning rate for it.
  double begin_step();
  double lr() const { return schedule_.at(step_ == 0 ? 1 : step_); }
  std::size_t step() const noexcept { return step_; }

  void update(const std::string& name, Matrix& param, const Matrix& grad);

  const AdamConfig& config() const noexcept { return cfg_; }
  const LrSchedule& schedule() const noexcept { return schedule_; }
  const ParamState* state(const std::string& name) const;

  std::size_t second_moment_elements() const;
  std::size_t first_moment_elements() const;

 private:
  AdamConfig cfg_;
  LrSchedule schedule_;
  std::size_t step_ = 0;
  std::map<std::string, ParamState> states_;
};

}  // namespace smoe
