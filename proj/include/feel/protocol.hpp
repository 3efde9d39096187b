// Copyright 2026 The feelsim Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "feel/capacity.hpp"
#include "feel/channel.hpp"
#include "feel/data.hpp"
#include "feel/learner.hpp"
#include "feel/quantizer.hpp"
#include "feel/random.hpp"
#include "feel/types.hpp"

namespace feel {

enum class Aggregation {
  kUniform,       // theta += (1/|K'|) sum of received updates
  kSizeWeighted,  // weights B_k / sum_{j in K'} B_j
};

struct ProtocolConfig {
  Index selected = 1;  // K
  double power_dl = 1.0;
  double power_ul = 1.0;
  Aggregation aggregation = Aggregation::kUniform;
  /// Full participation with one common downlink payload sized for the
  /// weakest device's capacity (the comparison scheme); `selected` is ignored.
  bool baseline = false;
  LocalSGDConfig sgd;
  int threads = 1;

  void validate(Index num_devices) const;
};

/** Parameter-server state, including its copy of every device's estimate. */
struct ServerState {
  ModelVector theta;
  std::vector<ModelVector> mirrors;
  std::vector<std::size_t> last_selected;
  std::size_t round = 0;
};

struct DeviceState {
  ModelVector estimate;
  ModelVector error_accumulator;
  OptimizerState optimizer;
  LabeledDataset shard;
};

/** One device's slot on one link in one round. */
struct LinkReport {
  Index device = 0;
  double capacity = 0.0;  // bits
  std::uint32_t q = 0;    // 0: nothing sent
  double bits = 0.0;      // bit_count(d, q), or 0 when q == 0

  bool operator==(const LinkReport&) const = default;
};

struct RoundReport {
  std::size_t round = 0;
  std::vector<Index> selected;
  std::vector<LinkReport> downlink;  // one per selected device
  std::vector<LinkReport> uplink;    // one per device that trained
  std::vector<Index> starved;        // selected but received nothing
  std::vector<Index> transmitted;    // uplink senders aggregated this round
  double dl_bits_total = 0.0;
  double ul_bits_total = 0.0;
  double accuracy = 0.0;
  double loss = 0.0;
  bool stalled = false;  // no uplink payload reached the server

  bool operator==(const RoundReport&) const = default;
};

/// Per-device record of the vectors that moved during a round, kept for
/// invariant checks.
struct DeviceTrace {
  Index device = 0;
  std::optional<ModelVector> downlink;  // dequantized payload added to the estimate
  std::optional<ModelVector> update;    // local delta
  ModelVector error_before;
  std::optional<ModelVector> uplink;    // dequantized payload sent to the server
  ModelVector error_after;
};

struct DownlinkOutcome {
  AllocationResult allocation;
  std::vector<LinkReport> links;            // aligned with `selected`
  std::vector<std::optional<ModelVector>> received;  // aligned with `selected`
};

struct UplinkOutcome {
  std::optional<AllocationResult> allocation;
  std::vector<LinkReport> links;                     // aligned with `participants`
  std::vector<std::optional<ModelVector>> received;  // aligned with `participants`
  std::vector<Index> transmitted;
};

/// The K devices with the largest ||h_m||^2, ties to the lowest index,
/// returned in ascending order.
std::vector<Index> select_devices(const ChannelRealization& dl, Index k);

/// Water-fills the broadcast channel over `selected` and sends each device
/// Q(theta - mirror_k, q_k) with q_k the largest level fitting its capacity.
/// Device estimate and server mirror receive the same dequantized vector.
/// Devices with q_k = 0 are left untouched.
DownlinkOutcome downlink_round(ServerState& server, const ChannelRealization& dl,
                               std::span<const Index> selected, double power_dl,
                               std::vector<DeviceState>& devices, const StreamFactory& streams,
                               int threads = 1);

/// Comparison scheme: every device in `selected` gets the same payload at the
/// level fitting the minimum per-device capacity.
DownlinkOutcome downlink_round_common_rate(ServerState& server, const ChannelRealization& dl,
                                           std::span<const Index> selected, double power_dl,
                                           std::vector<DeviceState>& devices, const StreamFactory& streams);

/// Error-feedback uplink over the MAC for `participants` (whose local deltas
/// are `updates`), followed by aggregation into server.theta in ascending
/// device order. An empty sender set leaves theta unchanged.
UplinkOutcome uplink_round(std::vector<DeviceState>& devices, std::span<const Index> participants,
                           std::span<const ModelVector> updates, const ChannelRealization& ul, double power_ul,
                           ServerState& server, const StreamFactory& streams, Aggregation aggregation,
                           int threads = 1);

struct ExperimentSetup {
  ChannelConfig channel;
  ProtocolConfig protocol;
  std::shared_ptr<const Learner> learner;
  std::vector<LabeledDataset> shards;  // one per device
  LabeledDataset test_set;
  std::uint64_t seed = 0;
  /// Empty: drawn from the learner's initializer on the "model-init" stream.
  ModelVector initial_model;
};

/// Round-by-round driver: draw channels, select, downlink, local training,
/// uplink, evaluate.
class Experiment {
 public:
  explicit Experiment(ExperimentSetup setup);

  RoundReport step();
  std::vector<RoundReport> run(std::size_t rounds);

  const ServerState& server() const { return server_; }
  const std::vector<DeviceState>& devices() const { return devices_; }
  const std::vector<DeviceTrace>& last_trace() const { return trace_; }
  const ModelVector& initial_model() const { return initial_model_; }
  const Learner& learner() const { return *setup_.learner; }

 private:
  ExperimentSetup setup_;
  StreamFactory streams_;
  ServerState server_;
  std::vector<DeviceState> devices_;
  std::vector<DeviceTrace> trace_;
  LabeledDataset train_union_;
  ModelVector initial_model_;
};

/// Convenience wrapper: a fresh Experiment run for `rounds` rounds.
std::vector<RoundReport> run_experiment(const ExperimentSetup& setup, std::size_t rounds);

}  // namespace feel
