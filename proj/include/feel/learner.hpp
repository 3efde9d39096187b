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
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "feel/data.hpp"
#include "feel/random.hpp"
#include "feel/types.hpp"

namespace feel {

/// A differentiable classifier over a flat parameter vector. The loss over a
/// batch is the mean per-example loss, so the gradient over a uniformly drawn
/// batch is an unbiased estimate of the full-shard gradient.
class Learner {
 public:
  virtual ~Learner() = default;

  virtual std::string name() const = 0;
  virtual Index parameter_count() const = 0;
  virtual ModelVector initial_parameters(Rng& rng) const = 0;

  virtual double loss(const ModelVector& theta, const LabeledDataset& data,
                      std::span<const Index> batch) const = 0;
  virtual ModelVector gradient(const ModelVector& theta, const LabeledDataset& data,
                               std::span<const Index> batch) const = 0;
  /// Arg-max class; ties resolve to the lowest class index.
  virtual int predict(const ModelVector& theta, const Eigen::Ref<const Vector<double>>& example) const = 0;

  double loss(const ModelVector& theta, const LabeledDataset& data) const;
  ModelVector gradient(const ModelVector& theta, const LabeledDataset& data) const;
};

/// Multinomial logistic regression. Parameters: W (classes x features,
/// row-major) followed by the bias vector.
class LogisticRegression final : public Learner {
 public:
  LogisticRegression(Index features, int classes);

  std::string name() const override { return "logistic"; }
  Index parameter_count() const override { return classes_ * (features_ + 1); }
  ModelVector initial_parameters(Rng& rng) const override;
  double loss(const ModelVector& theta, const LabeledDataset& data, std::span<const Index> batch) const override;
  ModelVector gradient(const ModelVector& theta, const LabeledDataset& data,
                       std::span<const Index> batch) const override;
  int predict(const ModelVector& theta, const Eigen::Ref<const Vector<double>>& example) const override;
  using Learner::gradient;
  using Learner::loss;

 private:
  Index features_;
  Index classes_;
};

/// One hidden ReLU layer. Parameters: W1 (hidden x features), b1, W2
/// (classes x hidden), b2; matrices row-major.
class Mlp final : public Learner {
 public:
  Mlp(Index features, Index hidden, int classes);

  std::string name() const override { return "mlp"; }
  Index parameter_count() const override;
  ModelVector initial_parameters(Rng& rng) const override;
  double loss(const ModelVector& theta, const LabeledDataset& data, std::span<const Index> batch) const override;
  ModelVector gradient(const ModelVector& theta, const LabeledDataset& data,
                       std::span<const Index> batch) const override;
  int predict(const ModelVector& theta, const Eigen::Ref<const Vector<double>>& example) const override;
  using Learner::gradient;
  using Learner::loss;

 private:
  Index features_;
  Index hidden_;
  Index classes_;
};

enum class OptimizerKind { kSgd, kAdam };

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/** Per-device optimizer memory; persists across the rounds a device trains in. */
struct OptimizerState {
  ModelVector first_moment;
  ModelVector second_moment;
  std::int64_t steps = 0;
};

struct LocalSGDConfig {
  int tau = 1;
  Index batch_size = 32;
  /// eta(round, step); step runs 1..tau.
  std::function<double(std::size_t, int)> learning_rate = [](std::size_t, int) { return 0.1; };
  OptimizerKind optimizer = OptimizerKind::kSgd;
  AdamParams adam;

  void validate() const;
};

std::function<double(std::size_t, int)> constant_learning_rate(double eta);

/// Uniform sample of `batch_size` distinct indices in [0, n). When
/// batch_size >= n the full range is returned in ascending order.
std::vector<Index> sample_batch(Index n, Index batch_size, Rng& rng);

/// tau local steps from `estimate`; returns theta^{tau+1} - theta^1.
/// Throws InvalidArgument("device has no data") on an empty shard.
ModelVector local_update(const Learner& learner, const ModelVector& estimate, const LabeledDataset& shard,
                         const LocalSGDConfig& cfg, std::size_t round, OptimizerState& state, Rng& rng);

/// Fraction of examples whose predicted class matches the label.
double evaluate(const Learner& learner, const ModelVector& theta, const LabeledDataset& test_set);

}  // namespace feel
