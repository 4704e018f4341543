// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "smoe/parallel_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <utility>

#include "smoe/text_config.hpp"

namespace smoe {

void ClusterSpec::validate() const {
  const std::pair<const char*, double> fields[] = {
      {"devices", devices},           {"per_device_batch", per_device_batch},
      {"experts", experts},           {"active_k", active_k},
      {"expert_hidden", expert_hidden}, {"model_dim", model_dim},
      {"device_flops", device_flops}, {"link_bandwidth", link_bandwidth}};
  for (const auto& [field, v] : fields) {
    if (!(v > 0.0)) throw ConfigError(std::string("ClusterSpec.") + field + " must be positive");
  }
  if (active_k > experts) throw ConfigError("ClusterSpec: active_k exceeds experts");
}

ExpertBatch expert_batch_size(const ClusterSpec& spec) {
  spec.validate();
  return {spec.active_k * spec.per_device_batch * spec.devices / spec.experts,
          spec.active_k * spec.per_device_batch / spec.experts};
}

double compute_io_ratio(const ClusterSpec& spec) {
  spec.validate();
  const double compute = spec.model_dim * spec.expert_hidden + spec.expert_hidden * spec.model_dim;
  return compute / (spec.model_dim + spec.model_dim);
}

double predicted_efficiency(const ClusterSpec& spec) {
  const double machine_ratio = spec.device_flops / spec.link_bandwidth;
  if (machine_ratio <= 0.0) return 1.0;
  return std::min(1.0, compute_io_ratio(spec) / machine_ratio);
}

double expert_params_per_device(const ClusterSpec& spec) {
  spec.validate();
  return spec.experts / spec.devices * (2.0 * spec.model_dim * spec.expert_hidden);
}

SimReport simulate(const ClusterSpec& spec) {
  const ExpertBatch eb = expert_batch_size(spec);
  SimReport r;
  r.name = spec.name;
  r.expert_batch = eb.combined;
  r.naive_expert_batch = eb.naive;
  r.compute_per_expert_example = 2.0 * spec.model_dim * spec.expert_hidden;
  r.flops_per_expert_example = 2.0 * r.compute_per_expert_example;
  r.io_per_expert_example = 2.0 * spec.model_dim;
  r.ratio = compute_io_ratio(spec);
  r.predicted_efficiency = predicted_efficiency(spec);
  r.expert_params_per_device = expert_params_per_device(spec);
  return r;
}

std::vector<SimReport> efficiency_sweep(std::span<const ClusterSpec> specs) {
  std::vector<SimReport> out;
  out.reserve(specs.size());
  for (const ClusterSpec& s : specs) out.push_back(simulate(s));
  return out;
}

void write_sweep_csv(std::ostream& os, std::span<const SimReport> reports) {
  os << "name,expert_batch,naive_expert_batch,ops_per_expert_example,flops_per_expert_example,"
        "io_per_expert_example,compute_io_ratio,predicted_efficiency,expert_params_per_device\n";
  for (const SimReport& r : reports) {
    os << r.name << ',' << r.expert_batch << ',' << r.naive_expert_batch << ','
       << r.compute_per_expert_example << ',' << r.flops_per_expert_example << ','
       << r.io_per_expert_example << ',' << r.ratio << ',' << r.predicted_efficiency << ','
       << r.expert_params_per_device << '\n';
  }
}

std::vector<ClusterSpec> parse_cluster_specs(const std::string& text) {
  std::vector<ClusterSpec> specs;
  for (const ConfigSection& sec : parse_config_text(text)) {
    if (sec.name != "spec") {
      throw ConfigError("line " + std::to_string(sec.line) + ": expected [spec] section, got [" +
                        sec.name + "]");
    }
    ClusterSpec s;
    s.name = "spec" + std::to_string(specs.size());
    s.link_bandwidth = std::numeric_limits<double>::infinity();
    for (const auto& [key, value] : sec.entries) {
      if (key == "name") s.name = value;
      else if (key == "devices") s.devices = parse_real(key, value);
      else if (key == "per_device_batch") s.per_device_batch = parse_real(key, value);
      else if (key == "experts") s.experts = parse_real(key, value);
      else if (key == "active_k") s.active_k = parse_real(key, value);
      else if (key == "expert_hidden") s.expert_hidden = parse_real(key, value);
      else if (key == "model_dim") s.model_dim = parse_real(key, value);
      else if (key == "device_flops") s.device_flops = parse_real(key, value);
      else if (key == "link_bandwidth") s.link_bandwidth = parse_real(key, value);
      else throw ConfigError("unknown ClusterSpec field: " + key);
    }
    s.validate();
    specs.push_back(std::move(s));
  }
  return specs;
}

}  // namespace smoe
