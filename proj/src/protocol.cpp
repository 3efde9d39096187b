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

#include "feel/protocol.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "feel/parallel.hpp"

namespace feel {

void ProtocolConfig::validate(Index num_devices) const {
  if (!baseline && (selected < 1 || selected > num_devices))
    throw InvalidArgument("protocol: K must satisfy 1 <= K <= M");
  if (!(power_dl > 0.0)) throw InvalidArgument("protocol: downlink power must be positive");
  if (!(power_ul > 0.0)) throw InvalidArgument("protocol: uplink power must be positive");
  if (threads < 1) throw InvalidArgument("protocol: threads must be >= 1");
  sgd.validate();
}

std::vector<Index> select_devices(const ChannelRealization& dl, Index k) {
  const Index m = dl.devices();
  if (k < 1 || k > m) throw InvalidArgument("select_devices: K must satisfy 1 <= K <= M");
  const Vector<double> norms = dl.gains.rowwise().squaredNorm();
  std::vector<Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return norms[a] > norms[b]; });
  order.resize(static_cast<std::size_t>(k));
  std::sort(order.begin(), order.end());
  return order;
}

namespace {

LinkReport make_link(Index device, double capacity, Index d) {
  LinkReport link{device, capacity, max_level_for_budget(d, BitBudget{capacity}), 0.0};
  if (link.q > 0) link.bits = bit_count(d, link.q);
  return link;
}

void deliver(ServerState& server, DeviceState& device, Index k, const ModelVector& payload) {
  const auto slot = static_cast<std::size_t>(k);
  device.estimate += payload;
  server.mirrors[slot] += payload;
  server.last_selected[slot] = server.round;
}

}  // namespace

DownlinkOutcome downlink_round(ServerState& server, const ChannelRealization& dl,
                               std::span<const Index> selected, double power_dl,
                               std::vector<DeviceState>& devices, const StreamFactory& streams, int threads) {
  const Index d = server.theta.size();
  DownlinkOutcome out;
  out.allocation = bc_waterfill(dl.restricted_to(selected), power_dl);
  out.links.resize(selected.size());
  out.received.resize(selected.size());
  for (std::size_t j = 0; j < selected.size(); ++j)
    out.links[j] = make_link(selected[j], out.allocation.device_capacity[static_cast<Index>(j)], d);

  parallel_for(selected.size(), threads, [&](std::size_t j) {
    const LinkReport& link = out.links[j];
    if (link.q == 0) return;
    const auto slot = static_cast<std::size_t>(link.device);
    Rng rng = streams.stream("quantizer-dl", {static_cast<std::uint64_t>(link.device), server.round});
    const QuantizedPayload payload = quantize(server.theta - server.mirrors[slot], link.q, rng);
    out.received[j] = dequantize(payload);
    deliver(server, devices[slot], link.device, *out.received[j]);
  });
  return out;
}

DownlinkOutcome downlink_round_common_rate(ServerState& server, const ChannelRealization& dl,
                                           std::span<const Index> selected, double power_dl,
                                           std::vector<DeviceState>& devices, const StreamFactory& streams) {
  const Index d = server.theta.size();
  DownlinkOutcome out;
  out.allocation = bc_waterfill(dl.restricted_to(selected), power_dl);
  const double weakest = out.allocation.device_capacity.minCoeff();
  out.links.resize(selected.size());
  out.received.resize(selected.size());
  for (std::size_t j = 0; j < selected.size(); ++j) {
    out.links[j] = make_link(selected[j], out.allocation.device_capacity[static_cast<Index>(j)], d);
    out.links[j].q = max_level_for_budget(d, BitBudget{weakest});
    out.links[j].bits = out.links[j].q > 0 ? bit_count(d, out.links[j].q) : 0.0;
  }
  if (selected.empty() || out.links.front().q == 0) return out;

  // All devices share one estimate in this scheme, so one difference serves everyone.
  const auto first = static_cast<std::size_t>(selected.front());
  for (Index k : selected) {
    if (server.mirrors[static_cast<std::size_t>(k)] != server.mirrors[first])
      throw InvalidArgument("common-rate downlink: device estimates have diverged");
  }
  Rng rng = streams.stream("quantizer-dl-common", {server.round});
  const ModelVector common = dequantize(quantize(server.theta - server.mirrors[first], out.links.front().q, rng));
  for (std::size_t j = 0; j < selected.size(); ++j) {
    out.received[j] = common;
    deliver(server, devices[static_cast<std::size_t>(selected[j])], selected[j], common);
  }
  return out;
}

UplinkOutcome uplink_round(std::vector<DeviceState>& devices, std::span<const Index> participants,
                           std::span<const ModelVector> updates, const ChannelRealization& ul, double power_ul,
                           ServerState& server, const StreamFactory& streams, Aggregation aggregation,
                           int threads) {
  if (updates.size() != participants.size())
    throw InvalidArgument("uplink_round: one local update per participant required");
  UplinkOutcome out;
  if (participants.empty()) return out;

  const Index d = server.theta.size();
  out.allocation = mac_waterfill(ul.restricted_to(participants), power_ul);
  out.links.resize(participants.size());
  out.received.resize(participants.size());
  for (std::size_t j = 0; j < participants.size(); ++j)
    out.links[j] = make_link(participants[j], out.allocation->device_capacity[static_cast<Index>(j)], d);

  parallel_for(participants.size(), threads, [&](std::size_t j) {
    const LinkReport& link = out.links[j];
    DeviceState& device = devices[static_cast<std::size_t>(link.device)];
    const ModelVector compensated = updates[j] + device.error_accumulator;
    if (link.q == 0) {
      device.error_accumulator = compensated;
      return;
    }
    Rng rng = streams.stream("quantizer-ul", {static_cast<std::uint64_t>(link.device), server.round});
    out.received[j] = dequantize(quantize(compensated, link.q, rng));
    device.error_accumulator = compensated - *out.received[j];
  });

  ModelVector sum = ModelVector::Zero(d);
  double weight_total = 0.0;
  for (std::size_t j = 0; j < participants.size(); ++j) {
    if (!out.received[j]) continue;
    out.transmitted.push_back(participants[j]);
    const double weight = aggregation == Aggregation::kUniform
                              ? 1.0
                              : static_cast<double>(devices[static_cast<std::size_t>(participants[j])].shard.size());
    sum += weight * *out.received[j];
    weight_total += weight;
  }
  if (!out.transmitted.empty() && weight_total > 0.0) server.theta += sum / weight_total;
  return out;
}

// --- Experiment --------------------------------------------------------------

namespace {

LabeledDataset concatenate(const std::vector<LabeledDataset>& parts) {
  LabeledDataset out;
  Index rows = 0;
  Index cols = 0;
  for (const auto& p : parts) {
    rows += p.size();
    cols = std::max(cols, p.feature_dim());
    out.num_classes = std::max(out.num_classes, p.num_classes);
  }
  out.features.resize(rows, cols);
  Index r = 0;
  for (const auto& p : parts) {
    if (p.size() == 0) continue;
    out.features.middleRows(r, p.size()) = p.features;
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    r += p.size();
  }
  return out;
}

}  // namespace

Experiment::Experiment(ExperimentSetup setup) : setup_(std::move(setup)), streams_(setup_.seed) {
  setup_.channel.validate();
  const Index m = setup_.channel.num_devices;
  setup_.protocol.validate(m);
  if (!setup_.learner) throw InvalidArgument("experiment: missing learner");
  if (static_cast<Index>(setup_.shards.size()) != m)
    throw InvalidArgument("experiment: need one shard per device (" + std::to_string(m) + ")");
  if (setup_.test_set.size() == 0) throw InvalidArgument("experiment: empty test set");

  if (setup_.initial_model.size() == 0) {
    Rng init = streams_.stream("model-init");
    initial_model_ = setup_.learner->initial_parameters(init);
  } else {
    if (setup_.initial_model.size() != setup_.learner->parameter_count())
      throw InvalidArgument("experiment: initial model has the wrong length");
    initial_model_ = setup_.initial_model;
  }
  const Index d = initial_model_.size();

  server_.theta = initial_model_;
  server_.mirrors.assign(static_cast<std::size_t>(m), initial_model_);
  server_.last_selected.assign(static_cast<std::size_t>(m), 0);
  devices_.resize(static_cast<std::size_t>(m));
  for (std::size_t k = 0; k < devices_.size(); ++k) {
    devices_[k].estimate = initial_model_;
    devices_[k].error_accumulator = ModelVector::Zero(d);
    devices_[k].shard = setup_.shards[k];
  }
  train_union_ = concatenate(setup_.shards);
}

RoundReport Experiment::step() {
  const std::size_t t = server_.round;
  const ProtocolConfig& cfg = setup_.protocol;
  const Index m = setup_.channel.num_devices;
  const ChannelRealization dl = draw_downlink(setup_.channel, streams_, t);
  const ChannelRealization ul = draw_uplink(setup_.channel, streams_, t);

  RoundReport report;
  report.round = t;
  if (cfg.baseline) {
    report.selected.resize(static_cast<std::size_t>(m));
    std::iota(report.selected.begin(), report.selected.end(), Index{0});
  } else {
    report.selected = select_devices(dl, cfg.selected);
  }

  trace_.clear();
  std::vector<ModelVector> errors_before;
  errors_before.reserve(report.selected.size());

  const DownlinkOutcome down =
      cfg.baseline ? downlink_round_common_rate(server_, dl, report.selected, cfg.power_dl, devices_, streams_)
                   : downlink_round(server_, dl, report.selected, cfg.power_dl, devices_, streams_, cfg.threads);
  report.downlink = down.links;

  std::vector<Index> participants;
  for (std::size_t j = 0; j < down.links.size(); ++j) {
    if (down.links[j].q == 0) {
      report.starved.push_back(down.links[j].device);
    } else {
      participants.push_back(down.links[j].device);
    }
    report.dl_bits_total += down.links[j].bits;
  }

  std::vector<ModelVector> updates(participants.size());
  parallel_for(participants.size(), cfg.threads, [&](std::size_t j) {
    DeviceState& dev = devices_[static_cast<std::size_t>(participants[j])];
    Rng rng = streams_.stream("local-sgd", {static_cast<std::uint64_t>(participants[j]), t});
    updates[j] = local_update(*setup_.learner, dev.estimate, dev.shard, cfg.sgd, t, dev.optimizer, rng);
  });

  for (Index k : participants) errors_before.push_back(devices_[static_cast<std::size_t>(k)].error_accumulator);

  const UplinkOutcome up =
      uplink_round(devices_, participants, updates, ul, cfg.power_ul, server_, streams_, cfg.aggregation, cfg.threads);
  report.uplink = up.links;
  report.transmitted = up.transmitted;
  report.stalled = up.transmitted.empty();
  for (const auto& link : up.links) report.ul_bits_total += link.bits;

  // Trace: selected devices in ascending order.
  std::size_t p = 0;
  for (std::size_t j = 0; j < report.selected.size(); ++j) {
    DeviceTrace tr;
    tr.device = report.selected[j];
    tr.downlink = down.received[j];
    const auto& dev = devices_[static_cast<std::size_t>(tr.device)];
    if (p < participants.size() && participants[p] == tr.device) {
      tr.update = updates[p];
      tr.error_before = errors_before[p];
      tr.uplink = up.received[p];
      ++p;
    } else {
      tr.error_before = dev.error_accumulator;
    }
    tr.error_after = dev.error_accumulator;
    trace_.push_back(std::move(tr));
  }

  report.accuracy = evaluate(*setup_.learner, server_.theta, setup_.test_set);
  report.loss = train_union_.size() > 0 ? setup_.learner->loss(server_.theta, train_union_) : 0.0;
  ++server_.round;
  return report;
}

std::vector<RoundReport> Experiment::run(std::size_t rounds) {
  std::vector<RoundReport> out;
  out.reserve(rounds);
  for (std::size_t r = 0; r < rounds; ++r) {
    try {
      out.push_back(step());
    } catch (const std::exception& e) {
      throw std::runtime_error("round " + std::to_string(server_.round) + ": " + e.what());
    }
  }
  return out;
}

std::vector<RoundReport> run_experiment(const ExperimentSetup& setup, std::size_t rounds) {
  Experiment experiment(setup);
  return experiment.run(rounds);
}

}  // namespace feel
