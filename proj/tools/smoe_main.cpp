// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

// smoe command line: train, eval, simulate, check-grads.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "smoe/gradcheck.hpp"
#include "smoe/harness/checkpoint.hpp"
#include "smoe/harness/config.hpp"
#include "smoe/harness/corpus.hpp"
#include "smoe/harness/trainer.hpp"
#include "smoe/parallel_sim.hpp"
#include "smoe/text_config.hpp"

namespace {

smoe::ToyLMConfig resolve_config(const std::string& path, std::optional<std::uint64_t> seed) {
  smoe::ToyLMConfig cfg = path.empty() ? smoe::ToyLMConfig{} : smoe::load_toy_config(path);
  if (seed) cfg.seed = *seed;
  cfg.validate();
  return cfg;
}

int run_train(const std::string& config, const std::string& out_dir,
              std::optional<std::uint64_t> seed, bool quiet) {
  const smoe::ToyLMConfig cfg = resolve_config(config, seed);
  const smoe::CorpusSplit data = smoe::load_corpus(cfg);
  smoe::TrainOptions opts;
  opts.out_dir = out_dir;
  if (!quiet) opts.log = &std::cerr;
  const smoe::TrainResult res = smoe::train(cfg, data, opts);
  std::cout << smoe::format_report(res.model, &res.final_record);
  return 0;
}

int run_eval(const std::string& config, const std::string& out_dir,
             std::optional<std::uint64_t> seed, std::string checkpoint) {
  if (checkpoint.empty()) checkpoint = (std::filesystem::path(out_dir) / "checkpoint.bin").string();
  const smoe::Checkpoint ck = smoe::load_checkpoint(checkpoint);
  // Data settings come from --config when given, else from the checkpoint.
  smoe::ToyLMConfig data_cfg = config.empty() ? ck.model.config : smoe::load_toy_config(config);
  if (seed) data_cfg.seed = *seed;
  const smoe::CorpusSplit data = smoe::load_corpus(data_cfg);
  const double ppl = smoe::evaluate(ck.model, data.eval);
  std::cout << "step " << ck.step << '\n'
            << "eval_perplexity " << std::setprecision(17) << ppl << '\n';
  return 0;
}

int run_simulate(const std::string& config, const std::string& out_dir) {
  if (config.empty()) throw smoe::ConfigError("simulate needs --config with [spec] sections");
  const auto specs = smoe::parse_cluster_specs(smoe::read_text_file(config));
  const auto reports = smoe::efficiency_sweep(specs);
  smoe::write_sweep_csv(std::cout, reports);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream os(std::filesystem::path(out_dir) / "sweep.csv");
    smoe::write_sweep_csv(os, reports);
  }
  return 0;
}

int run_check_grads(std::optional<std::uint64_t> seed) {
  const auto results = smoe::run_gradient_suite(seed.value_or(1));
  int failed = 0;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(44) << r.name
              << " max_rel_err " << std::scientific << std::setprecision(2) << r.max_rel_error
              << std::defaultfloat << " (" << r.entries << " entries)\n";
    failed += r.passed ? 0 : 1;
  }
  std::cout << results.size() - failed << '/' << results.size() << " passed\n";
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparsely-gated mixture-of-experts toolkit"};
  app.require_subcommand(1);

  std::string config, out_dir = "out", checkpoint;
  std::optional<std::uint64_t> seed;
  bool quiet = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "Config file (key = value lines)");
    sub->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();
    sub->add_option("--seed", seed, "Override the config seed");
  };
  CLI::App* train = app.add_subcommand("train", "Train a toy language model");
  common(train);
  train->add_flag("--quiet", quiet, "No progress log on stderr");
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on held-out data");
  common(eval);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint path (default <out-dir>/checkpoint.bin)");
  CLI::App* simulate = app.add_subcommand("simulate", "Parallel cost model over cluster specs");
  common(simulate);
  CLI::App* grads = app.add_subcommand("check-grads", "Finite-difference gradient suite");
  grads->add_option("--seed", seed, "Random seed for the test inputs");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return run_train(config, out_dir, seed, quiet);
    if (*eval) return run_eval(config, out_dir, seed, checkpoint);
    if (*simulate) return run_simulate(config, simulate->count("--out-dir") ? out_dir : "");
    if (*grads) return run_check_grads(seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
