// Copyright 2026 The smoe Authors
// SPDX-License-Identifier: Apache-2.0

// Closed-form cost model for mixed data/model parallel MoE training: how big
// each expert's batch gets when d synchronous replicas pool their examples,
// and whether an expert's arithmetic hides the cost of shipping its inputs
// and outputs over the network.

#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace smoe {

struct ClusterSpec {
  std::string name;
  double devices = 1;           ///< d
  double per_device_batch = 1;  ///< b
  double experts = 1;           ///< n
  double active_k = 1;          ///< k
  double expert_hidden = 1;     ///< h
  double model_dim = 1;         ///< expert input and output width
  double device_flops = 1;      ///< ops / second
  double link_bandwidth = 1;    ///< values / second; may be +inf

  void validate() const;
};

struct ExpertBatch {
  double combined = 0;  ///< k·b·d/n with pooled data-parallel batches
  double naive = 0;     ///< k·b/n on a single replica
};

struct SimReport {
  std::string name;
  double expert_batch = 0;
  double naive_expert_batch = 0;
  double compute_per_expert_example = 0;  ///< multiply-adds, one op each
  double flops_per_expert_example = 0;    ///< multiply-adds counted as two ops
  double io_per_expert_example = 0;       ///< values in + values out
  double ratio = 0;                       ///< compute / io
  double predicted_efficiency = 0;        ///< fraction of peak, roofline bound
  double expert_params_per_device = 0;
};

ExpertBatch expert_batch_size(const ClusterSpec& spec);

/// (model_dim·h + h·model_dim) / (model_dim + model_dim), which equals h.
double compute_io_ratio(const ClusterSpec& spec);

/// min(1, ratio / (device_flops / link_bandwidth)).
double predicted_efficiency(const ClusterSpec& spec);

/// Experts are spread evenly, so each device hosts n/d of them.
double expert_params_per_device(const ClusterSpec& spec);

SimReport simulate(const ClusterSpec& spec);
std::vector<SimReport> efficiency_sweep(std::span<const ClusterSpec> specs);

void write_sweep_csv(std::ostream& os, std::span<const SimReport> reports);

/// Parses "[spec]" sections of key = value lines using the ClusterSpec field
/// names (devices, per_device_batch, experts, active_k, expert_hidden,
/// model_dim, device_flops, link_bandwidth, name). "inf" is accepted.
std::vector<ClusterSpec> parse_cluster_specs(const std::string& text);

}  // namespace smoe
