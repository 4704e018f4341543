// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "smoe/harness/corpus.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <stdexcept>

#include "smoe/harness/config.hpp"
#include "smoe/text_config.hpp"

namespace smoe {
namespace {

constexpr std::size_t kEvalBlock = 256;

}  // namespace

Token SyntheticLanguage::next(std::size_t mode, std::span<const Token> history, Rng& rng) const {
  // Too little history (stream start): uniform.
  if (history.size() + 1 != order) return rng.below(vocab_size);
  std::uint64_t h = splitmix64(seed ^ (mode + 1));
  for (Token t : history) h = splitmix64(h ^ (t + 0x51ed27ULL));

  double total = 0.0;
  for (std::size_t j = 0; j < successors; ++j) total += 1.0 / static_cast<double>(j + 1);
  double u = rng.uniform() * total;
  std::size_t pick = successors - 1;
  for (std::size_t j = 0; j < successors; ++j) {
    u -= 1.0 / static_cast<double>(j + 1);
    if (u < 0.0) {
      pick = j;
      break;
    }
  }
  return splitmix64(h ^ (pick * 0x9e37ULL + 7)) % vocab_size;
}

std::vector<Token> synthetic_stream(const SyntheticLanguage& lang, std::size_t length, Rng& rng) {
  if (lang.modes == 0 || lang.vocab_size == 0 || lang.order < 2)
    throw std::invalid_argument("synthetic_stream: bad language shape");
  std::vector<Token> out;
  out.reserve(length);
  std::size_t mode = rng.below(lang.modes);
  const std::size_t ctx = lang.order - 1;
  for (std::size_t t = 0; t < length; ++t) {
    if (rng.uniform() * static_cast<double>(lang.segment) < 1.0) mode = rng.below(lang.modes);
    const std::span<const Token> history =
        t >= ctx ? std::span<const Token>(out).subspan(t - ctx, ctx) : std::span<const Token>();
    out.push_back(lang.next(mode, history, rng));
  }
  return out;
}

CorpusSplit tokenize_text(const std::string& text, std::size_t vocab_size, double eval_fraction,
                          std::uint64_t seed) {
  if (vocab_size < 2) throw std::invalid_argument("tokenize_text: vocab_size must be >= 2");
  std::vector<std::string> words;
  std::istringstream lines(text);
  std::string line, w;
  while (std::getline(lines, line)) {
    std::istringstream ws(line);
    bool any = false;
    while (ws >> w) {
      words.push_back(w);
      any = true;
    }
    if (any) words.push_back("</s>");
  }
  if (words.empty()) throw std::runtime_error("corpus is empty");

  std::map<std::string, std::size_t> freq;
  for (const std::string& s : words) ++freq[s];
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  CorpusSplit split;
  split.vocab_size = vocab_size;
  split.words.push_back("<unk>");
  std::map<std::string, Token> ids;
  for (const auto& [s, n] : ranked) {
    if (split.words.size() == vocab_size) break;
    ids.emplace(s, split.words.size());
    split.words.push_back(s);
  }

  Rng rng(seed);
  const std::size_t blocks = (words.size() + kEvalBlock - 1) / kEvalBlock;
  std::vector<bool> to_eval(blocks);
  for (std::size_t b = 0; b < blocks; ++b) to_eval[b] = rng.uniform() < eval_fraction;
  if (blocks >= 2) {
    // Both sides need at least one block.
    if (std::none_of(to_eval.begin(), to_eval.end(), [](bool e) { return e; })) to_eval.back() = true;
    if (std::all_of(to_eval.begin(), to_eval.end(), [](bool e) { return e; })) to_eval.front() = false;
  }
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto it = ids.find(words[i]);
    const Token id = it == ids.end() ? 0 : it->second;
    (to_eval[i / kEvalBlock] ? split.eval : split.train).push_back(id);
  }
  return split;
}

CorpusSplit load_corpus(const ToyLMConfig& cfg) {
  cfg.validate();
  if (cfg.corpus != "synthetic")
    return tokenize_text(read_text_file(cfg.corpus), cfg.vocab_size, cfg.eval_fraction, cfg.seed);

  SyntheticLanguage lang;
  lang.vocab_size = cfg.vocab_size;
  lang.modes = cfg.synthetic_modes;
  lang.order = cfg.synthetic_order;
  lang.successors = cfg.synthetic_successors;
  lang.segment = cfg.synthetic_segment;
  const Rng root(cfg.seed);
  lang.seed = root.split(0).seed();
  // Separate sample streams over the same language.
  Rng train_rng = root.split(1), eval_rng = root.split(2);
  CorpusSplit split;
  split.vocab_size = cfg.vocab_size;
  split.train = synthetic_stream(lang, cfg.train_tokens, train_rng);
  split.eval = synthetic_stream(lang, cfg.eval_tokens, eval_rng);
  if (split.train.empty() || split.eval.empty()) throw std::runtime_error("corpus is empty");
  return split;
}

}  // namespace smoe
