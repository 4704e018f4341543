// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

#include "smoe/matrix.hpp"

namespace smoe {

/// Seeded generator with deterministic splitting.
///
/// A child stream is a pure function of (parent seed, stream id), so code
/// that splits per expert or per step stays reproducible regardless of the
/// order in which other streams are consumed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  Rng split(std::uint64_t stream) const;

  double normal();
  double uniform();  ///< [0, 1)
  double uniform(double lo, double hi);
  std::uint64_t below(std::uint64_t n);  ///< uniform integer in [0, n)
  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// i.i.d. standard normal entries.
Matrix gaussian_sample(std::size_t rows, std::size_t cols, Rng& rng);
Matrix gaussian_sample(std::size_t rows, std::size_t cols, std::uint64_t seed);

/// Entries uniform in [-limit, limit].
Matrix uniform_sample(std::size_t rows, std::size_t cols, double limit, Rng& rng);

}  // namespace smoe
