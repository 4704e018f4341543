// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "smoe/harness/trainer.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "smoe/balance.hpp"
#include "smoe/batchwise.hpp"
#include "smoe/harness/checkpoint.hpp"
#include "smoe/kernels.hpp"
#include "smoe/ops.hpp"
#include "smoe/optimizer.hpp"

namespace smoe {
namespace {

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

Var balance_loss(const ToyLMConfig& c, const ForwardResult& f) {
  if (f.tree) {
    if (c.w_importance == 0.0 && c.w_load == 0.0) return {};
    return hierarchical_balance_loss(*f.tree, c.w_importance, c.w_load);
  }
  const GateResult& g = f.flat->gates;
  Var loss;
  if (c.w_importance > 0.0) loss = importance_loss(g.gates, c.w_importance);
  // Load is only defined through the noise; batchwise gates are balanced by
  // construction.
  if (c.w_load > 0.0 && g.has_noise()) {
    Var l = load_loss(g, c.w_load);
    loss = loss.valid() ? add(loss, l) : l;
  }
  return loss;
}

BalanceReport step_balance(const ForwardResult& f) {
  if (f.flat) return balance_report(f.flat->gates, f.flat->plan);
  const Matrix imp = importance_h(*f.tree).value();
  std::vector<double> ld;
  if (f.tree->primary.has_noise()) {
    const Matrix l = load_h(*f.tree).value();
    ld.assign(l.data().begin(), l.data().end());
  } else {
    const std::size_t b = f.tree->groups.empty() ? 0 : imp.cols();
    ld.assign(imp.size(), 0.0);
    for (std::size_t i = 0; i < f.tree->groups.size(); ++i) {
      if (!f.tree->groups[i]) continue;
      const auto h = hard_load(f.tree->groups[i]->plan);
      for (std::size_t j = 0; j < h.size(); ++j) ld[i * b + j] = h[j];
    }
  }
  return balance_report(std::vector<double>(imp.data().begin(), imp.data().end()), std::move(ld));
}

struct Window {
  double ce = 0.0, cv_imp = 0.0, cv_load = 0.0, max_mean = 0.0;
  std::size_t steps = 0;
  void add(double loss, const BalanceReport& b) {
    ce += loss;
    cv_imp += b.cv_importance;
    cv_load += b.cv_load;
    max_mean += b.max_over_mean_load;
    ++steps;
  }
};

}  // namespace

void write_metrics_csv(std::ostream& os, std::span<const TrainRecord> records) {
  os << kMetricsHeader << '\n';
  for (const TrainRecord& r : records) {
    os << r.step << ',' << num(r.train_loss) << ',' << num(r.eval_perplexity) << ','
       << num(r.cv_importance) << ',' << num(r.cv_load) << ',' << num(r.max_over_mean_load) << ','
       << num(r.lr) << ',' << r.expert_row_evals << '\n';
  }
}

double evaluate(const ToyLM& model, std::span<const Token> stream) {
  const ToyLMConfig& c = model.config;
  if (stream.size() <= c.context_len) throw std::invalid_argument("evaluate: stream too short");
  for (Token t : stream)
    if (t >= c.vocab_size) throw std::out_of_range("evaluate: token id exceeds model vocab");
  const Rng noise_root = Rng(c.seed).split(7);
  double total = 0.0;
  std::size_t count = 0, chunk = 0;
  std::vector<std::size_t> positions;
  for (std::size_t start = c.context_len; start < stream.size(); start += c.batch_size, ++chunk) {
    positions.clear();
    for (std::size_t p = start; p < std::min(stream.size(), start + c.batch_size); ++p)
      positions.push_back(p);
    const Batch b = make_batch(stream, positions, c.context_len);
    Tape tape;
    ParamBinder bind(tape);
    Rng rng = noise_root.split(chunk);
    ForwardOptions fo;
    fo.train = false;
    fo.noise = c.eval_noise;
    const ForwardResult f = forward(model, b, bind, rng, fo);
    total += f.cross_entropy.value().item() * static_cast<double>(b.size());
    count += b.size();
  }
  return std::exp(total / static_cast<double>(count));
}

TrainResult train(const ToyLMConfig& cfg, const CorpusSplit& data, const TrainOptions& opts) {
  cfg.validate();
  if (data.vocab_size > cfg.vocab_size) throw std::invalid_argument("train: corpus vocab exceeds model vocab");
  if (data.train.size() <= cfg.context_len) throw std::invalid_argument("train: training stream too short");

  TrainResult res;
  res.model = ToyLM::build(cfg);
  ToyLM& model = res.model;
  auto params = model.trainable_parameters();

  AdamConfig ac;
  ac.beta2 = cfg.beta2;
  ac.factored = cfg.factored_second_moment;
  Adam adam(ac, LrSchedule{cfg.learning_rate, cfg.warmup_steps});

  const std::size_t capacity = cfg.gating_mode == GatingMode::kBatchwise
                                   ? batchwise_capacity(cfg.batch_size, cfg.n_experts, cfg.k)
                                   : 0;
  const Rng root = Rng(cfg.seed).split(200);
  const std::uint64_t span = data.train.size() - cfg.context_len;
  std::vector<std::size_t> positions(cfg.batch_size);
  std::size_t row_evals = 0;
  Window win;

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    Rng step_rng = root.split(step);
    Rng batch_rng = step_rng.split(0), model_rng = step_rng.split(1);
    for (auto& p : positions) p = cfg.context_len + batch_rng.below(span);
    const Batch batch = make_batch(data.train, positions, cfg.context_len);

    Tape tape;
    ParamBinder bind(tape);
    ForwardOptions fo;
    fo.recompute_activations = cfg.recompute_expert_activations;
    const ForwardResult f = forward(model, batch, bind, model_rng, fo);
    Var objective = f.cross_entropy;
    if (Var bl = balance_loss(cfg, f); bl.valid()) objective = add(objective, bl);
    const double total = objective.value().item();
    if (!std::isfinite(total)) {
      throw std::runtime_error("training diverged at step " + std::to_string(step) +
                               ": objective " + num(total) + ", cross-entropy " +
                               num(f.cross_entropy.value().item()));
    }
    tape.backward(objective);
    res.peak_retained_elements = std::max(res.peak_retained_elements, tape.retained_elements());

    const double lr = adam.begin_step();
    for (auto& [name, p] : params) {
      const Matrix* g = bind.grad_of(*p);
      adam.update(name, *p, g ? *g : Matrix(p->rows(), p->cols()));
    }
    if (capacity > 0) {
      const Matrix dense = kernel::softmax_rows(f.flat->gates.clean_logits.value());
      threshold_step(model.moe.thresholds, dense, capacity, cfg.threshold_lr);
    }

    row_evals += f.expert_row_evals;
    res.step_losses.push_back(total);
    win.add(f.cross_entropy.value().item(), step_balance(f));

    if (step % cfg.metrics_every == 0 || step == cfg.steps) {
      TrainRecord r;
      r.step = step;
      const double w = static_cast<double>(win.steps);
      r.train_loss = win.ce / w;
      r.cv_importance = win.cv_imp / w;
      r.cv_load = win.cv_load / w;
      r.max_over_mean_load = win.max_mean / w;
      r.lr = lr;
      r.expert_row_evals = row_evals;
      const bool do_eval = step == cfg.steps || (cfg.eval_every > 0 && step % cfg.eval_every == 0);
      r.eval_perplexity = do_eval ? evaluate(model, data.eval) : std::numeric_limits<double>::quiet_NaN();
      res.records.push_back(r);
      win = Window{};
      if (opts.log) {
        *opts.log << "step " << r.step << " loss " << r.train_loss << " ppl " << r.eval_perplexity
                  << " cv_imp " << r.cv_importance << " max/mean " << r.max_over_mean_load << '\n';
      }
    }
  }
  if (!res.records.empty()) res.final_record = res.records.back();

  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    const std::filesystem::path dir(opts.out_dir);
    std::ofstream csv(dir / "metrics.csv");
    write_metrics_csv(csv, res.records);
    save_checkpoint((dir / "checkpoint.bin").string(), model, cfg.steps);
    std::ofstream(dir / "report.txt") << format_report(model, res.records.empty() ? nullptr : &res.final_record);
  }
  return res;
}

std::string format_report(const ToyLM& model, const TrainRecord* fin) {
  const ParameterReport p = parameter_report(model);
  const ToyLMConfig& c = model.config;
  std::ostringstream os;
  os << "model\n"
     << "  experts            " << c.n_experts << " (k = " << c.active_experts() << " active";
  if (c.hierarchical()) os << ", " << c.hierarchical_groups << " groups";
  os << ")\n"
     << "  gating             "
     << (c.gating_mode == GatingMode::kNoisyTopK ? "noisy_topk" : "batchwise") << "\n\n"
     << "parameters\n"
     << "  embedding          " << p.embedding << '\n'
     << "  context encoder    " << p.encoder << '\n'
     << "  moe experts        " << p.moe_experts << '\n'
     << "  moe gating         " << p.moe_gating << '\n'
     << "  softmax readout    " << p.readout << '\n'
     << "  total              " << p.total() << '\n'
     << "  moe / rest         " << p.moe_experts + p.moe_gating << " / "
     << p.total() - p.moe_experts - p.moe_gating << "\n\n"
     << "ops/timestep (multiply-adds per token)\n"
     << "  excluding softmax  " << p.ops_per_timestep_excluding_softmax << '\n'
     << "  including softmax  " << p.ops_per_timestep_including_softmax << '\n';
  if (fin) {
    os << "\nfinal (step " << fin->step << ")\n"
       << "  train_loss         " << num(fin->train_loss) << '\n'
       << "  eval_perplexity    " << num(fin->eval_perplexity) << '\n'
       << "  cv_importance      " << num(fin->cv_importance) << '\n'
       << "  cv_load            " << num(fin->cv_load) << '\n'
       << "  max_over_mean_load " << num(fin->max_over_mean_load) << '\n'
       << "  expert_row_evals   " << fin->expert_row_evals << '\n';
  }
  return os.str();
}

}  // namespace smoe
