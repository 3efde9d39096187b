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

#include <cmath>
#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include "doctest.h"

#include "feel/protocol.hpp"
#include "fixtures.hpp"

using feel::ChannelRealization;
using feel::Index;
using feel::ModelVector;

namespace {

// `s` identical sub-channels; device m has power gain norms[m] on each.
ChannelRealization realization_from_norms(std::initializer_list<double> norms, Index s = 1) {
  ChannelRealization r;
  r.gains.resize(static_cast<Index>(norms.size()), s);
  Index m = 0;
  for (double n : norms) r.gains.row(m++).setConstant(std::sqrt(n));
  return r;
}

struct Bench {
  feel::ServerState server;
  std::vector<feel::DeviceState> devices;
};

Bench bench(Index m, const ModelVector& theta0) {
  Bench b;
  b.server.theta = theta0;
  b.server.mirrors.assign(static_cast<std::size_t>(m), theta0);
  b.server.last_selected.assign(static_cast<std::size_t>(m), 0);
  b.devices.resize(static_cast<std::size_t>(m));
  for (auto& d : b.devices) {
    d.estimate = theta0;
    d.error_accumulator = ModelVector::Zero(theta0.size());
  }
  return b;
}

}  // namespace

TEST_SUITE("protocol") {

TEST_CASE("select_devices: largest channel norms, ascending output") {
  CHECK(feel::select_devices(realization_from_norms({5.0, 9.0, 1.0}), 2) == std::vector<Index>{0, 1});
  CHECK(feel::select_devices(realization_from_norms({5.0, 9.0, 1.0}), 3) == std::vector<Index>{0, 1, 2});
  CHECK(feel::select_devices(realization_from_norms({3.0, 3.0, 1.0}), 1) == std::vector<Index>{0});
  CHECK(feel::select_devices(realization_from_norms({1.0, 3.0, 3.0}), 1) == std::vector<Index>{1});
  CHECK_THROWS_AS(feel::select_devices(realization_from_norms({1.0, 2.0}), 3), feel::InvalidArgument);
  CHECK_THROWS_AS(feel::select_devices(realization_from_norms({1.0, 2.0}), 0), feel::InvalidArgument);
}

TEST_CASE("select_devices: invariant under a common gain scale") {
  const feel::ChannelConfig c{12, 7, 1, 10.0, 1.0};
  for (std::size_t t = 0; t < 30; ++t) {
    auto dl = feel::draw_downlink(c, feel::StreamFactory(5), t);
    const auto before = feel::select_devices(dl, 4);
    dl.gains *= std::complex<double>(0.0, 3.7);
    CHECK(feel::select_devices(dl, 4) == before);
  }
}

TEST_CASE("downlink: a zero difference arrives exactly") {
  const ModelVector theta0 = ModelVector::LinSpaced(6, -1.0, 2.0);
  Bench b = bench(3, theta0);
  const auto dl = realization_from_norms({1e6, 1.0, 1.0}, 64);
  const std::vector<Index> selected{0};
  const auto out = feel::downlink_round(b.server, dl, selected, 1e6, b.devices, feel::StreamFactory(1));
  CHECK(out.links[0].q > 1000);
  CHECK(b.devices[0].estimate == theta0);
  CHECK(b.server.mirrors[0] == theta0);
}

TEST_CASE("downlink: capacity below R_1 starves the device") {
  Bench b = bench(1, ModelVector::Ones(4));
  b.server.theta = ModelVector::Constant(4, 3.0);
  b.server.round = 5;
  ChannelRealization dl;
  dl.gains.resize(1, 1);
  dl.gains(0, 0) = std::sqrt(std::exp2(71.9) - 1.0);  // capacity log2(1 + g) = 71.9 bits at P = 1
  const std::vector<Index> selected{0};
  const auto out = feel::downlink_round(b.server, dl, selected, 1.0, b.devices, feel::StreamFactory(1));
  CHECK(out.links[0].capacity == doctest::Approx(71.9).epsilon(1e-12));
  CHECK(out.links[0].q == 0);
  CHECK(out.links[0].bits == 0.0);
  CHECK_FALSE(out.received[0].has_value());
  CHECK(b.server.mirrors[0] == ModelVector::Ones(4));
  CHECK(b.server.last_selected[0] == 0);

  dl.gains(0, 0) = std::sqrt(std::exp2(72.0 + 1e-9) - 1.0);
  const auto ok = feel::downlink_round(b.server, dl, selected, 1.0, b.devices, feel::StreamFactory(1));
  CHECK(ok.links[0].q == 1);
  CHECK(b.server.last_selected[0] == 5);
  CHECK(b.server.mirrors[0] == b.devices[0].estimate);
}

TEST_CASE("downlink: mirrors track estimates and budgets hold") {
  const feel::ChannelConfig c{6, 40, 1, 10.0, 10.0};
  const feel::StreamFactory streams(3);
  Bench b = bench(6, ModelVector::Zero(25));
  std::mt19937_64 gen(1);
  std::normal_distribution<double> normal;
  for (std::size_t t = 0; t < 20; ++t) {
    b.server.round = t;
    for (Index i = 0; i < 25; ++i) b.server.theta[i] += normal(gen);
    const auto dl = feel::draw_downlink(c, streams, t);
    const auto selected = feel::select_devices(dl, 3);
    const auto out = feel::downlink_round(b.server, dl, selected, 300.0, b.devices, streams);
    for (const auto& link : out.links) {
      if (link.q > 0) CHECK(feel::bit_count(25, link.q) <= link.capacity);
    }
    for (std::size_t k = 0; k < 6; ++k) CHECK(b.server.mirrors[k] == b.devices[k].estimate);
  }
}

TEST_CASE("uplink: zero update and zero error leave theta unchanged") {
  const ModelVector theta0 = ModelVector::LinSpaced(5, 0.0, 1.0);
  Bench b = bench(2, theta0);
  const std::vector<Index> participants{0, 1};
  const std::vector<ModelVector> updates(2, ModelVector::Zero(5));
  const auto ul = realization_from_norms({100.0, 50.0}, 64);
  const auto out = feel::uplink_round(b.devices, participants, updates, ul, 1e6, b.server, feel::StreamFactory(2),
                                      feel::Aggregation::kUniform);
  CHECK(out.transmitted.size() == 2);
  CHECK(b.server.theta == theta0);
  CHECK(b.devices[0].error_accumulator == ModelVector::Zero(5));
}

TEST_CASE("uplink: one device with ample capacity lands within the quantizer step") {
  Bench b = bench(1, ModelVector::Zero(8));
  const ModelVector delta = ModelVector::LinSpaced(8, -0.5, 0.9);
  const std::vector<Index> participants{0};
  const std::vector<ModelVector> updates{delta};
  ChannelRealization ul;
  ul.gains = feel::GainMatrix::Constant(1, 64, std::complex<double>(3.0, 0.0));
  const auto out = feel::uplink_round(b.devices, participants, updates, ul, 1e3, b.server, feel::StreamFactory(2),
                                      feel::Aggregation::kUniform);
  const std::uint32_t q = out.links[0].q;
  REQUIRE(q >= 1);
  const double step = delta.cwiseAbs().maxCoeff() / q * 1.0001;
  CHECK((b.server.theta - delta).cwiseAbs().maxCoeff() <= step);
  CHECK(b.devices[0].error_accumulator == delta - b.server.theta);
}

TEST_CASE("uplink: starved sender folds its update into the error") {
  Bench b = bench(2, ModelVector::Zero(50));
  const std::vector<Index> participants{0, 1};
  const std::vector<ModelVector> updates{ModelVector::Constant(50, 0.1), ModelVector::Constant(50, -0.2)};
  const auto ul = realization_from_norms({1e-3, 1e-3});
  const auto out = feel::uplink_round(b.devices, participants, updates, ul, 1.0, b.server, feel::StreamFactory(2),
                                      feel::Aggregation::kUniform);
  CHECK(out.transmitted.empty());
  CHECK(b.server.theta == ModelVector::Zero(50));
  CHECK(b.devices[0].error_accumulator == updates[0]);
  CHECK(b.devices[1].error_accumulator == updates[1]);
}

TEST_CASE("uplink: aggregation weights") {
  for (auto mode : {feel::Aggregation::kUniform, feel::Aggregation::kSizeWeighted}) {
    Bench b = bench(2, ModelVector::Zero(1));
    b.devices[0].shard.labels.assign(1, 0);
    b.devices[0].shard.features.resize(1, 1);
    b.devices[1].shard.labels.assign(3, 0);
    b.devices[1].shard.features.resize(3, 1);
    const std::vector<Index> participants{0, 1};
    // d = 1 vectors quantize exactly.
    const std::vector<ModelVector> updates{ModelVector::Constant(1, 4.0), ModelVector::Constant(1, 8.0)};
    const auto ul = realization_from_norms({10.0, 10.0}, 64);
    feel::uplink_round(b.devices, participants, updates, ul, 1e4, b.server, feel::StreamFactory(2), mode);
    const double expected = mode == feel::Aggregation::kUniform ? 6.0 : (4.0 + 3.0 * 8.0) / 4.0;
    CHECK(b.server.theta[0] == doctest::Approx(expected).epsilon(1e-15));
  }
}

TEST_CASE("uplink capacity per device shrinks with K on symmetric channels") {
  feel::GainMatrix row(1, 50);
  std::mt19937_64 gen(4);
  std::normal_distribution<double> normal;
  for (Index i = 0; i < 50; ++i) row(0, i) = {normal(gen), normal(gen)};
  double previous = std::numeric_limits<double>::infinity();
  for (Index k = 1; k <= 8; ++k) {
    ChannelRealization ul;
    ul.gains = row.replicate(k, 1);
    const auto r = feel::mac_waterfill(ul, 10.0);
    CHECK(r.device_capacity[0] == doctest::Approx(r.sum_capacity / static_cast<double>(k)));
    CHECK(r.device_capacity[0] < previous);
    previous = r.device_capacity[0];
  }
}

TEST_CASE("experiment: full participation selects everyone") {
  feel::fixtures::SyntheticOptions opts;
  opts.selected = opts.devices;
  feel::Experiment e(feel::fixtures::synthetic_setup(opts));
  for (int t = 0; t < 3; ++t) {
    const auto r = e.step();
    CHECK(r.selected.size() == static_cast<std::size_t>(opts.devices));
  }
}

TEST_CASE("experiment: reconstruction identity and error telescoping hold bit-exactly") {
  feel::fixtures::SyntheticOptions opts;
  feel::Experiment e(feel::fixtures::synthetic_setup(opts));
  std::vector<ModelVector> received(static_cast<std::size_t>(opts.devices), e.initial_model());
  for (int t = 0; t < 15; ++t) {
    const auto r = e.step();
    for (const auto& tr : e.last_trace()) {
      const auto k = static_cast<std::size_t>(tr.device);
      if (tr.downlink) received[k] += *tr.downlink;
      if (tr.update) {
        const ModelVector compensated = *tr.update + tr.error_before;
        const ModelVector expected = tr.uplink ? ModelVector(compensated - *tr.uplink) : compensated;
        CHECK(tr.error_after == expected);
      }
    }
    for (std::size_t k = 0; k < received.size(); ++k) {
      CHECK(e.server().mirrors[k] == e.devices()[k].estimate);
      CHECK(received[k] == e.devices()[k].estimate);
    }
    for (const auto& l : r.downlink) {
      if (l.q > 0) CHECK(feel::bit_count(e.server().theta.size(), l.q) <= l.capacity);
    }
    for (const auto& l : r.uplink) {
      if (l.q > 0) CHECK(feel::bit_count(e.server().theta.size(), l.q) <= l.capacity);
    }
  }
}

TEST_CASE("experiment: starved rounds stall without touching the model") {
  feel::fixtures::SyntheticOptions opts;
  opts.power_dl = 1e-6;
  opts.s_dl = 1;
  feel::Experiment e(feel::fixtures::synthetic_setup(opts));
  const ModelVector theta0 = e.server().theta;
  const auto first = e.step();
  CHECK(first.starved.size() == first.selected.size());
  CHECK(first.stalled);
  CHECK(first.dl_bits_total == 0.0);
  CHECK(first.ul_bits_total == 0.0);
  CHECK(first.uplink.empty());
  CHECK(e.server().theta == theta0);
  const auto second = e.step();
  CHECK(second.accuracy == first.accuracy);
}

TEST_CASE("experiment: deterministic across runs and thread counts") {
  feel::fixtures::SyntheticOptions opts;
  opts.optimizer = feel::OptimizerKind::kAdam;
  opts.learning_rate = 0.01;
  const auto a = feel::run_experiment(feel::fixtures::synthetic_setup(opts), 8);
  const auto b = feel::run_experiment(feel::fixtures::synthetic_setup(opts), 8);
  opts.threads = 4;
  const auto c = feel::run_experiment(feel::fixtures::synthetic_setup(opts), 8);
  CHECK(a == b);
  CHECK(a == c);
}

TEST_CASE("experiment: baseline shares one estimate across all devices") {
  feel::fixtures::SyntheticOptions opts;
  auto setup = feel::fixtures::synthetic_setup(opts);
  setup.protocol.baseline = true;
  feel::Experiment e(setup);
  for (int t = 0; t < 5; ++t) {
    const auto r = e.step();
    CHECK(r.selected.size() == static_cast<std::size_t>(opts.devices));
    std::uint32_t q = r.downlink.front().q;
    double weakest = r.downlink.front().capacity;
    for (const auto& l : r.downlink) {
      CHECK(l.q == q);
      weakest = std::min(weakest, l.capacity);
    }
    CHECK(q == feel::max_level_for_budget(e.server().theta.size(), feel::BitBudget{weakest}));
    for (const auto& dev : e.devices()) CHECK(dev.estimate == e.devices().front().estimate);
  }
}

TEST_CASE("experiment: setup validation") {
  feel::fixtures::SyntheticOptions opts;
  auto setup = feel::fixtures::synthetic_setup(opts);
  setup.protocol.selected = opts.devices + 1;
  CHECK_THROWS_AS(feel::Experiment{setup}, feel::InvalidArgument);
  setup = feel::fixtures::synthetic_setup(opts);
  setup.shards.pop_back();
  CHECK_THROWS_AS(feel::Experiment{setup}, feel::InvalidArgument);
}

}
