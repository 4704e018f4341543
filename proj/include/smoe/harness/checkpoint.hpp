// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

// checkpoint.bin layout, all integers little-endian:
//   8 bytes   magic "SMOECKPT"
//   u32       format version (1)
//   u64       step
//   u64 + n   config echo (format_toy_config text)
//   u64       number of blobs, then per blob:
//     u64 + n name, u64 rows, u64 cols, rows·cols IEEE-754 doubles row-major

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "smoe/harness/model.hpp"

namespace smoe {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  ToyLM model;
  std::size_t step = 0;
};

void write_checkpoint(std::ostream& os, const ToyLM& model, std::size_t step);
/// Rebuilds the model from the config echo, then fills every blob. Missing,
/// extra or mis-shaped blobs raise CheckpointError.
Checkpoint read_checkpoint(std::istream& is);

void save_checkpoint(const std::string& path, const ToyLM& model, std::size_t step);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace smoe
