// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "smoe/harness/checkpoint.hpp"
#include "smoe/harness/config.hpp"
#include "smoe/harness/corpus.hpp"
#include "smoe/harness/model.hpp"
#include "smoe/harness/trainer.hpp"
#include "smoe/text_config.hpp"

namespace smoe {
namespace {

// Small enough to train in well under a second per hundred steps.
ToyLMConfig small_config() {
  ToyLMConfig c;
  c.vocab_size = 64;
  c.model_dim = 16;
  c.n_experts = 4;
  c.k = 2;
  c.expert_hidden = 16;
  c.batch_size = 32;
  c.steps = 30;
  c.train_tokens = 20000;
  c.eval_tokens = 2048;
  c.warmup_steps = 10;
  c.metrics_every = 10;
  return c;
}

TEST(Config, FormatThenParseRoundTrips) {
  ToyLMConfig c = small_config();
  c.learning_rate = 0.1 + 0.2;  // not exactly representable in short decimal
  c.gating_mode = GatingMode::kBatchwise;
  c.factored_second_moment = FactorMode::kOff;
  c.eval_noise = true;
  const ToyLMConfig back = parse_toy_config(format_toy_config(c));
  EXPECT_EQ(format_toy_config(back), format_toy_config(c));
  EXPECT_EQ(back.learning_rate, c.learning_rate);
  EXPECT_EQ(back.gating_mode, GatingMode::kBatchwise);
}

TEST(Config, RejectsUnknownKeysAndInconsistentSettings) {
  EXPECT_THROW(parse_toy_config("no_such_key = 3\n"), ConfigError);
  EXPECT_THROW(parse_toy_config("k = 20\nn_experts = 4\n"), ConfigError);
  EXPECT_THROW(parse_toy_config("gating_mode = batchwise\nbatch_size = 30\nn_experts = 4\n"),
               ConfigError);
  EXPECT_THROW(parse_toy_config("gating_mode = sideways\n"), ConfigError);
  const ToyLMConfig c = parse_toy_config("[model]\nn_experts = 8\n[train]\nsteps = 5\n");
  EXPECT_EQ(c.n_experts, 8u);
  EXPECT_EQ(c.steps, 5u);
}

TEST(Corpus, SyntheticIsDeterministicBoundedAndSplit) {
  ToyLMConfig c;
  c.train_tokens = 1000000;
  const CorpusSplit a = load_corpus(c), b = load_corpus(c);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.eval, b.eval);
  EXPECT_EQ(a.train.size(), 1000000u);
  EXPECT_TRUE(std::all_of(a.train.begin(), a.train.end(), [&](Token t) { return t < c.vocab_size; }));
  EXPECT_NE(a.train, load_corpus([&] {
              ToyLMConfig d = c;
              d.seed = 2;
              return d;
            }()).train);
}

TEST(Corpus, ModesUseDistinctTransitions) {
  SyntheticLanguage lang;
  lang.order = 2;
  lang.seed = 9;
  const Token history[] = {17};
  std::set<Token> seen[2];
  Rng rng(1);
  for (std::size_t mode = 0; mode < 2; ++mode)
    for (int i = 0; i < 200; ++i) seen[mode].insert(lang.next(mode, history, rng));
  EXPECT_LE(seen[0].size(), lang.successors);
  EXPECT_NE(seen[0], seen[1]);
}

TEST(Corpus, TextFileTokenizationAndDisjointSplit) {
  std::string text;
  for (int i = 0; i < 4000; ++i) text += "w" + std::to_string(i % 37) + (i % 11 == 0 ? "\n" : " ");
  const CorpusSplit s = tokenize_text(text, 16, 0.2, 3);
  const std::size_t total = s.train.size() + s.eval.size();
  EXPECT_GT(total, 4000u);  // words plus end-of-line markers
  EXPECT_FALSE(s.eval.empty());
  for (Token t : s.train) EXPECT_LT(t, 16u);
  EXPECT_EQ(s.words.size(), 16u);
  EXPECT_EQ(s.words[0], "<unk>");
  EXPECT_THROW(tokenize_text("   \n  ", 16, 0.1, 1), std::runtime_error);

  const auto path = std::filesystem::temp_directory_path() / "smoe_test_corpus.txt";
  std::ofstream(path) << text;
  ToyLMConfig c;
  c.corpus = path.string();
  c.vocab_size = 16;
  EXPECT_EQ(load_corpus(c).train.size() + load_corpus(c).eval.size(), total);
  std::filesystem::remove(path);
  c.corpus = "/nonexistent/corpus.txt";
  EXPECT_ANY_THROW(load_corpus(c));
}

TEST(Model, ExtraExpertsAccountForTheParameterDifference) {
  ToyLMConfig moe;
  ToyLMConfig one = moe;
  one.n_experts = 1;
  one.k = 1;
  const ToyLM a = ToyLM::build(moe), b = ToyLM::build(one);
  const ParameterReport ra = parameter_report(a), rb = parameter_report(b);
  const std::size_t per_expert = a.moe.experts[0].parameter_count();
  EXPECT_EQ(per_expert, 2u * 64u * 128u);
  EXPECT_EQ(ra.total() - rb.total(), 15 * per_expert + (ra.moe_gating - rb.moe_gating));
  EXPECT_EQ(ra.moe_gating - rb.moe_gating, 2u * 64u * 15u);
  EXPECT_EQ(ra.embedding + ra.encoder + ra.readout, rb.embedding + rb.encoder + rb.readout);
  EXPECT_GT(ra.ops_per_timestep_including_softmax, ra.ops_per_timestep_excluding_softmax);
}

TEST(Model, ForwardShapeAndExpertEvaluations) {
  const ToyLMConfig c = small_config();
  const CorpusSplit data = load_corpus(c);
  const ToyLM m = ToyLM::build(c);
  std::vector<std::size_t> pos(10);
  std::iota(pos.begin(), pos.end(), c.context_len);
  const Batch batch = make_batch(data.train, pos, c.context_len);
  Tape t;
  ParamBinder bind(t);
  Rng rng(1);
  const ForwardResult r = forward(m, batch, bind, rng, {});
  EXPECT_EQ(r.logits.rows(), 10u);
  EXPECT_EQ(r.logits.cols(), c.vocab_size);
  EXPECT_EQ(r.expert_row_evals, c.k * 10);
}

TEST(Model, HierarchicalExpertEvaluations) {
  ToyLMConfig c = small_config();
  c.n_experts = 8;
  c.hierarchical_groups = 4;
  c.k_primary = 2;
  c.k = 1;
  const CorpusSplit data = load_corpus(c);
  const ToyLM m = ToyLM::build(c);
  std::vector<std::size_t> pos(12);
  std::iota(pos.begin(), pos.end(), c.context_len);
  Tape t;
  ParamBinder bind(t);
  Rng rng(1);
  const ForwardResult r = forward(m, make_batch(data.train, pos, c.context_len), bind, rng, {});
  EXPECT_EQ(r.expert_row_evals, 2u * 1u * 12u);
}

TEST(Evaluate, UniformPredictorHasVocabPerplexity) {
  const ToyLMConfig c = small_config();
  ToyLM m = ToyLM::build(c);
  m.readout_w.fill(0.0);
  m.readout_b.fill(0.0);
  EXPECT_NEAR(evaluate(m, load_corpus(c).eval), static_cast<double>(c.vocab_size), 1e-6);
}

TEST(Train, EvaluateReproducesReportedPerplexity) {
  ToyLMConfig c = small_config();
  c.steps = 150;
  const CorpusSplit data = load_corpus(c);
  const TrainResult r = train(c, data);
  EXPECT_EQ(evaluate(r.model, data.eval), r.final_record.eval_perplexity);
  EXPECT_GT(r.final_record.eval_perplexity, 1.0);
  EXPECT_LE(r.final_record.eval_perplexity, static_cast<double>(c.vocab_size));
  EXPECT_EQ(r.final_record.expert_row_evals, c.steps * c.k * c.batch_size);
  EXPECT_EQ(r.records.back().step, c.steps);
}

TEST(Train, LossDecreasesOverTwoHundredSteps) {
  std::vector<double> drops;
  for (std::uint64_t seed : {1, 2, 3}) {
    ToyLMConfig c = small_config();
    c.steps = 200;
    c.seed = seed;
    const TrainResult r = train(c, load_corpus(c));
    const auto& l = r.step_losses;
    const double head = std::accumulate(l.begin(), l.begin() + 20, 0.0) / 20;
    const double tail = std::accumulate(l.end() - 20, l.end(), 0.0) / 20;
    drops.push_back(head - tail);
  }
  std::sort(drops.begin(), drops.end());
  EXPECT_GT(drops[1], 0.0);
}

TEST(Train, BatchwiseModeLearnsThresholds) {
  ToyLMConfig c = small_config();
  c.gating_mode = GatingMode::kBatchwise;
  c.w_load = 0.0;
  const TrainResult r = train(c, load_corpus(c));
  const Matrix& t = r.model.moe.thresholds.values;
  EXPECT_TRUE(std::any_of(t.data().begin(), t.data().end(), [](double v) { return v != 0.0; }));
  EXPECT_TRUE(std::isfinite(r.final_record.eval_perplexity));
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  const ToyLMConfig c = small_config();
  const CorpusSplit data = load_corpus(c);
  const TrainResult r = train(c, data);
  std::stringstream ss;
  write_checkpoint(ss, r.model, c.steps);
  const Checkpoint back = read_checkpoint(ss);
  EXPECT_EQ(back.step, c.steps);
  const auto want = r.model.named_parameters();
  const auto got = back.model.named_parameters();
  ASSERT_EQ(want.size(), got.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    EXPECT_EQ(want[i].first, got[i].first);
    EXPECT_EQ(*want[i].second, *got[i].second) << want[i].first;
  }
  EXPECT_EQ(evaluate(back.model, data.eval), evaluate(r.model, data.eval));
}

TEST(Checkpoint, RejectsCorruptStreams) {
  std::stringstream bad("NOTACKPT");
  EXPECT_THROW(read_checkpoint(bad), CheckpointError);
  const ToyLM m = ToyLM::build(small_config());
  std::stringstream ss;
  write_checkpoint(ss, m, 1);
  const std::string full = ss.str();
  std::stringstream cut(full.substr(0, full.size() - 8));
  EXPECT_THROW(read_checkpoint(cut), CheckpointError);
  EXPECT_THROW(load_checkpoint("/nonexistent/checkpoint.bin"), CheckpointError);
}

TEST(Metrics, CsvHasHeaderAndOneRowPerRecord) {
  TrainRecord r;
  r.step = 10;
  r.train_loss = 1.5;
  r.eval_perplexity = std::nan("");
  std::ostringstream os;
  const TrainRecord rows[] = {r, r};
  write_metrics_csv(os, rows);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, kMetricsHeader);
  int n = 0;
  while (std::getline(is, line)) {
    ++n;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 7);
  }
  EXPECT_EQ(n, 2);
}

TEST(Train, WritesArtifacts) {
  const auto dir = std::filesystem::temp_directory_path() / "smoe_test_out";
  std::filesystem::remove_all(dir);
  TrainOptions opts;
  opts.out_dir = dir.string();
  const ToyLMConfig c = small_config();
  train(c, load_corpus(c), opts);
  for (const char* f : {"metrics.csv", "checkpoint.bin", "report.txt"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  EXPECT_EQ(load_checkpoint((dir / "checkpoint.bin").string()).step, c.steps);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace smoe
