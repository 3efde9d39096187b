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

// Small synthetic experiment builders shared by the unit and acceptance suites.

#pragma once

#include <memory>

#include "feel/data.hpp"
#include "feel/learner.hpp"
#include "feel/protocol.hpp"

namespace feel::fixtures {

struct SyntheticOptions {
  Index devices = 10;
  Index selected = 5;
  int classes = 10;
  Index dim = 10;
  Index per_class_train = 40;
  Index per_class_test = 40;
  double separation = 3.0;
  Index s_dl = 64;
  Index s_ul = 32;
  double sigma2 = 10.0;
  double power_dl = 1e4;
  double power_ul = 1e3;
  int tau = 2;
  Index batch_size = 8;
  double learning_rate = 0.1;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  std::uint64_t seed = 1;
  int threads = 1;
  bool mlp = false;
  Index hidden = 16;
};

inline ExperimentSetup synthetic_setup(const SyntheticOptions& opts) {
  const StreamFactory streams(opts.seed);
  Rng train_rng = streams.stream("data-synth-train");
  Rng test_rng = streams.stream("data-synth-test");
  Rng shuffle = streams.stream("data-shuffle");
  const auto train = synth_classification(opts.classes, opts.per_class_train, opts.dim, opts.separation, train_rng);
  const auto test = synth_classification(opts.classes, opts.per_class_test, opts.dim, opts.separation, test_rng);
  const auto plan = shard_single_class(train, opts.devices, shuffle);

  ExperimentSetup setup;
  setup.seed = opts.seed;
  setup.channel = {opts.devices, opts.s_dl, opts.s_ul, opts.sigma2, opts.sigma2};
  setup.protocol.selected = opts.selected;
  setup.protocol.power_dl = opts.power_dl;
  setup.protocol.power_ul = opts.power_ul;
  setup.protocol.threads = opts.threads;
  setup.protocol.sgd.tau = opts.tau;
  setup.protocol.sgd.batch_size = opts.batch_size;
  setup.protocol.sgd.learning_rate = constant_learning_rate(opts.learning_rate);
  setup.protocol.sgd.optimizer = opts.optimizer;
  if (opts.mlp) {
    setup.learner = std::make_shared<Mlp>(opts.dim, opts.hidden, opts.classes);
  } else {
    setup.learner = std::make_shared<LogisticRegression>(opts.dim, opts.classes);
  }
  for (const auto& shard : plan.assignment) setup.shards.push_back(train.subset(shard));
  setup.test_set = test;
  return setup;
}

}  // namespace feel::fixtures
