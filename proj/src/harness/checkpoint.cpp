// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "smoe/harness/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

namespace smoe {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

constexpr char kMagic[8] = {'S', 'M', 'O', 'E', 'C', 'K', 'P', 'T'};
// Guards against reading garbage lengths from a corrupt file.
constexpr std::uint64_t kMaxString = 1 << 20;

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <class T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw CheckpointError("checkpoint truncated");
  return v;
}

std::string get_string(std::istream& is) {
  const auto n = get<std::uint64_t>(is);
  if (n > kMaxString) throw CheckpointError("checkpoint string length out of range");
  std::string s(n, '\0');
  if (!is.read(s.data(), static_cast<std::streamsize>(n))) throw CheckpointError("checkpoint truncated");
  return s;
}

}  // namespace

void write_checkpoint(std::ostream& os, const ToyLM& model, std::size_t step) {
  os.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint64_t>(os, step);
  put_string(os, format_toy_config(model.config));
  const auto params = model.named_parameters();
  put<std::uint64_t>(os, params.size());
  for (const auto& [name, m] : params) {
    put_string(os, name);
    put<std::uint64_t>(os, m->rows());
    put<std::uint64_t>(os, m->cols());
    os.write(reinterpret_cast<const char*>(m->data().data()),
             static_cast<std::streamsize>(m->size() * sizeof(double)));
  }
  if (!os) throw CheckpointError("checkpoint write failed");
}

Checkpoint read_checkpoint(std::istream& is) {
  char magic[sizeof kMagic];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw CheckpointError("not a checkpoint (bad magic)");
  const auto version = get<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ck;
  ck.step = get<std::uint64_t>(is);
  ck.model = ToyLM::build(parse_toy_config(get_string(is)));

  std::map<std::string, Matrix*> slots;
  for (const auto& [name, m] : ck.model.named_parameters()) slots.emplace(name, m);
  const auto count = get<std::uint64_t>(is);
  if (count != slots.size())
    throw CheckpointError("checkpoint has " + std::to_string(count) + " blobs, model expects " +
                          std::to_string(slots.size()));
  for (std::uint64_t b = 0; b < count; ++b) {
    const std::string name = get_string(is);
    const auto it = slots.find(name);
    if (it == slots.end()) throw CheckpointError("unexpected blob '" + name + "'");
    Matrix& m = *it->second;
    const auto rows = get<std::uint64_t>(is), cols = get<std::uint64_t>(is);
    if (rows != m.rows() || cols != m.cols()) {
      throw CheckpointError("blob '" + name + "' is [" + std::to_string(rows) + "x" +
                            std::to_string(cols) + "], model expects " + m.shape_str());
    }
    if (!is.read(reinterpret_cast<char*>(m.data().data()),
                 static_cast<std::streamsize>(m.size() * sizeof(double))))
      throw CheckpointError("checkpoint truncated in blob '" + name + "'");
    slots.erase(it);
  }
  return ck;
}

void save_checkpoint(const std::string& path, const ToyLM& model, std::size_t step) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open " + path + " for writing");
  write_checkpoint(os, model, step);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + path);
  return read_checkpoint(is);
}

}  // namespace smoe
