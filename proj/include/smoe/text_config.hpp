// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

// Minimal "key = value" configuration text with optional [section] headers.
// '#' starts a comment; blank lines are ignored.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace smoe {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfigSection {
  std::string name;  ///< empty for entries that precede any header
  std::size_t line = 0;
  std::vector<std::pair<std::string, std::string>> entries;
};

std::vector<ConfigSection> parse_config_text(const std::string& text);

std::string read_text_file(const std::string& path);

double parse_real(const std::string& key, const std::string& value);
std::size_t parse_count(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);

}  // namespace smoe
