// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "smoe/random.hpp"

namespace smoe {

struct ToyLMConfig;

using Token = std::size_t;

struct CorpusSplit {
  std::vector<Token> train;
  std::vector<Token> eval;
  std::size_t vocab_size = 0;
  std::vector<std::string> words;  ///< id -> word, file corpora only
};

/// A mixture of sub-languages over one shared vocabulary. In each mode, every
/// context of (order - 1) tokens has a few fixed continuations with Zipf
/// weights, drawn independently per mode. The active mode switches at random
/// between long segments, so the transitions seen in the recent window reveal
/// which sub-language is being spoken.
struct SyntheticLanguage {
  std::size_t vocab_size = 256;
  std::size_t modes = 4;
  std::size_t order = 3;
  std::size_t successors = 3;
  std::size_t segment = 128;
  std::uint64_t seed = 0;  ///< fixes the continuation tables

  /// Samples the token following `history` (the last order - 1 tokens).
  Token next(std::size_t mode, std::span<const Token> history, Rng& rng) const;
};

std::vector<Token> synthetic_stream(const SyntheticLanguage& lang, std::size_t length, Rng& rng);

/// Whitespace-separated words with an end-of-line token. The most frequent
/// vocab_size - 1 words get ids 1.., everything else maps to id 0 (<unk>).
/// Fixed-size blocks go to eval with probability eval_fraction.
CorpusSplit tokenize_text(const std::string& text, std::size_t vocab_size, double eval_fraction,
                          std::uint64_t seed);

/// Synthetic data when cfg.corpus == "synthetic", else the named text file.
/// Train and eval never share a token position.
CorpusSplit load_corpus(const ToyLMConfig& cfg);

}  // namespace smoe
