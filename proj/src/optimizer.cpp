// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "smoe/optimizer.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace smoe {

double LrSchedule::at(std::size_t step) const {
  if (step == 0) throw std::invalid_argument("LrSchedule: steps are counted from 1");
  if (warmup_steps == 0) return base_lr;
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup_steps);
  if (step <= warmup_steps) return base_lr * s / w;
  return base_lr * std::sqrt(w / s);
}

void factored_second_moment_update(FactoredMoment& state, const Matrix& grad_sq, double beta2) {
  if (state.row_avg.size() != grad_sq.rows() || state.col_avg.size() != grad_sq.cols()) {
    throw ShapeError("factored_second_moment_update: state does not match " + grad_sq.shape_str());
  }
  const double inv_cols = 1.0 / static_cast<double>(grad_sq.cols());
  const double inv_rows = 1.0 / static_cast<double>(grad_sq.rows());
  std::vector<double> col_mean(grad_sq.cols(), 0.0);
  for (std::size_t r = 0; r < grad_sq.rows(); ++r) {
    const auto row = grad_sq.row(r);
    double row_total = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      row_total += row[c];
      col_mean[c] += row[c];
    }
    state.row_avg[r] = beta2 * state.row_avg[r] + (1.0 - beta2) * row_total * inv_cols;
  }
  for (std::size_t c = 0; c < grad_sq.cols(); ++c) {
    state.col_avg[c] = beta2 * state.col_avg[c] + (1.0 - beta2) * col_mean[c] * inv_rows;
  }
}

Matrix reconstruct_second_moment(const FactoredMoment& state, double bias_correction) {
  const std::size_t rows = state.row_avg.size();
  const std::size_t cols = state.col_avg.size();
  Matrix v(rows, cols);
  const double inv_bc = 1.0 / bias_correction;
  if (rows == 1) {
    for (std::size_t c = 0; c < cols; ++c) v[c] = state.col_avg[c] * inv_bc;
    return v;
  }
  if (cols == 1) {
    for (std::size_t r = 0; r < rows; ++r) v[r] = state.row_avg[r] * inv_bc;
    return v;
  }
  const double row_mean =
      std::accumulate(state.row_avg.begin(), state.row_avg.end(), 0.0) / static_cast<double>(rows) * inv_bc;
  if (row_mean <= 0.0) return v;
  for (std::size_t r = 0; r < rows; ++r) {
    const double rr = state.row_avg[r] * inv_bc / row_mean;
    auto out = v.row(r);
    for (std::size_t c = 0; c < cols; ++c) out[c] = rr * state.col_avg[c] * inv_bc;
  }
  return v;
}

bool should_factor(const AdamConfig& cfg, const Matrix& param) {
  switch (cfg.factored) {
    case FactorMode::kOn:
      return true;
    case FactorMode::kOff:
      return false;
    case FactorMode::kAuto:
      break;
  }
  return param.rows() >= 2 && param.cols() >= 2 && param.size() >= cfg.factor_min_elements;
}

ParamState make_state(const AdamConfig& cfg, const Matrix& param) {
  ParamState s;
  s.factored = should_factor(cfg, param);
  if (cfg.beta1 != 0.0) s.first_moment = Matrix(param.rows(), param.cols());
  if (s.factored) {
    s.factors = FactoredMoment::zeros(param.rows(), param.cols());
  } else {
    s.second_moment = Matrix(param.rows(), param.cols());
  }
  return s;
}

void adam_step(Matrix& param, const Matrix& grad, ParamState& state, const AdamConfig& cfg,
               double lr) {
  require_same_shape(param, grad, "adam_step");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);

  const Matrix* direction = &grad;
  Matrix corrected_first;
  if (cfg.beta1 != 0.0) {
    require_same_shape(param, state.first_moment, "adam_step: first moment");
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    corrected_first = Matrix(param.rows(), param.cols());
    for (std::size_t i = 0; i < grad.size(); ++i) {
      state.first_moment[i] = cfg.beta1 * state.first_moment[i] + (1.0 - cfg.beta1) * grad[i];
      corrected_first[i] = state.first_moment[i] / bc1;
    }
    direction = &corrected_first;
  }

  if (state.factored) {
    Matrix grad_sq(grad.rows(), grad.cols());
    for (std::size_t i = 0; i < grad.size(); ++i) grad_sq[i] = grad[i] * grad[i] + cfg.grad_sq_floor;
    factored_second_moment_update(state.factors, grad_sq, cfg.beta2);
    const Matrix v_hat = reconstruct_second_moment(state.factors, bc2);
    for (std::size_t i = 0; i < param.size(); ++i) {
      param[i] -= lr * (*direction)[i] / (std::sqrt(v_hat[i]) + cfg.epsilon);
    }
    return;
  }
  require_same_shape(param, state.second_moment, "adam_step: second moment");
  const double inv_bc2 = 1.0 / bc2;
  for (std::size_t i = 0; i < param.size(); ++i) {
    state.second_moment[i] = cfg.beta2 * state.second_moment[i] + (1.0 - cfg.beta2) * (grad[i] * grad[i]);
    const double v_hat = state.second_moment[i] * inv_bc2;
    param[i] -= lr * (*direction)[i] / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

double Adam::begin_step() {
  ++step_;
  return schedule_.at(step_);
}

void Adam::update(const std::string& name, Matrix& param, const Matrix& grad) {
  if (step_ == 0) throw std::logic_error("Adam::update called before begin_step");
  auto it = states_.find(name);
  if (it == states_.end()) it = states_.emplace(name, make_state(cfg_, param)).first;
  adam_step(param, grad, it->second, cfg_, schedule_.at(step_));
}

const ParamState* Adam::state(const std::string& name) const {
  auto it = states_.find(name);
  return it == states_.end() ? nullptr : &it->second;
}

std::size_t Adam::second_moment_elements() const {
  std::size_t n = 0;
  for (const auto& [_, s] : states_) n += s.second_moment_size();
  return n;
}

std::size_t Adam::first_moment_elements() const {
  std::size_t n = 0;
  for (const auto& [_, s] : states_) n += s.first_moment_size();
  return n;
}

}  // namespace smoe
