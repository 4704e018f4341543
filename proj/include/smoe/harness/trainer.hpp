// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "smoe/harness/corpus.hpp"
#include "smoe/harness/model.hpp"

namespace smoe {

/// One metrics.csv row. Loss and balance columns average the steps since the
/// previous row; eval_perplexity is NaN on rows without an eval pass.
struct TrainRecord {
  std::size_t step = 0;
  double train_loss = 0.0;  ///< cross-entropy, nats per token
  double eval_perplexity = 0.0;
  double cv_importance = 0.0;
  double cv_load = 0.0;
  double max_over_mean_load = 0.0;
  double lr = 0.0;
  std::size_t expert_row_evals = 0;  ///< cumulative
};

inline constexpr const char* kMetricsHeader =
    "step,train_loss,eval_perplexity,cv_importance,cv_load,max_over_mean_load,lr,"
    "expert_row_evals";

void write_metrics_csv(std::ostream& os, std::span<const TrainRecord> records);

struct TrainOptions {
  /// When non-empty, metrics.csv, checkpoint.bin and report.txt go here.
  std::string out_dir;
  std::ostream* log = nullptr;
};

struct TrainResult {
  ToyLM model;
  std::vector<TrainRecord> records;
  TrainRecord final_record;
  std::vector<double> step_losses;  ///< total objective per step
  /// Largest Tape::retained_elements() over all steps.
  std::size_t peak_retained_elements = 0;
};

/// Runs cfg.steps of Adam on cross-entropy plus the balance losses. Throws
/// std::runtime_error if the objective becomes non-finite.
TrainResult train(const ToyLMConfig& cfg, const CorpusSplit& data, const TrainOptions& opts = {});

/// exp(mean cross-entropy) over every position of `stream` with a full
/// context, with dropout off and gating noise per cfg.eval_noise.
double evaluate(const ToyLM& model, std::span<const Token> stream);

/// Human-readable parameter and ops/timestep breakdown.
std::string format_report(const ToyLM& model, const TrainRecord* final_record);

}  // namespace smoe
