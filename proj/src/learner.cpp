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

#include "feel/learner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace feel {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMajorMatrix>;
using MatrixMap = Eigen::Map<RowMajorMatrix>;

std::vector<Index> all_indices(Index n) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  return idx;
}

Matrix<double> gather_rows(const LabeledDataset& data, std::span<const Index> batch) {
  Matrix<double> x(static_cast<Index>(batch.size()), data.feature_dim());
  for (std::size_t r = 0; r < batch.size(); ++r) x.row(static_cast<Index>(r)) = data.features.row(batch[r]);
  return x;
}

void require_batch(std::span<const Index> batch) {
  if (batch.empty()) throw InvalidArgument("learner: empty batch");
}

// Row-wise log-softmax, shifted by the row max.
Matrix<double> log_softmax(const Matrix<double>& logits) {
  Matrix<double> out = logits;
  for (Index r = 0; r < out.rows(); ++r) {
    const double shift = out.row(r).maxCoeff();
    out.row(r).array() -= shift;
    const double lse = std::log(out.row(r).array().exp().sum());
    out.row(r).array() -= lse;
  }
  return out;
}

double mean_cross_entropy(const Matrix<double>& logits, const LabeledDataset& data, std::span<const Index> batch) {
  const Matrix<double> lp = log_softmax(logits);
  double total = 0.0;
  for (std::size_t r = 0; r < batch.size(); ++r)
    total -= lp(static_cast<Index>(r), data.labels[static_cast<std::size_t>(batch[r])]);
  return total / static_cast<double>(batch.size());
}

// d(mean CE)/d(logits) = (softmax - onehot) / b.
Matrix<double> cross_entropy_logit_gradient(const Matrix<double>& logits, const LabeledDataset& data,
                                            std::span<const Index> batch) {
  Matrix<double> g = log_softmax(logits).array().exp().matrix();
  for (std::size_t r = 0; r < batch.size(); ++r)
    g(static_cast<Index>(r), data.labels[static_cast<std::size_t>(batch[r])]) -= 1.0;
  return g / static_cast<double>(batch.size());
}

int argmax(const Vector<double>& scores) {
  Index best = 0;
  for (Index c = 1; c < scores.size(); ++c) {
    if (scores[c] > scores[best]) best = c;
  }
  return static_cast<int>(best);
}

}  // namespace

double Learner::loss(const ModelVector& theta, const LabeledDataset& data) const {
  const auto idx = all_indices(data.size());
  return loss(theta, data, idx);
}

ModelVector Learner::gradient(const ModelVector& theta, const LabeledDataset& data) const {
  const auto idx = all_indices(data.size());
  return gradient(theta, data, idx);
}

// --- logistic regression -----------------------------------------------------

LogisticRegression::LogisticRegression(Index features, int classes) : features_(features), classes_(classes) {
  if (features < 1 || classes < 2) throw InvalidArgument("logistic: need >= 1 feature and >= 2 classes");
}

ModelVector LogisticRegression::initial_parameters(Rng& rng) const {
  std::normal_distribution<double> normal(0.0, 0.01);
  ModelVector theta(parameter_count());
  for (Index i = 0; i < theta.size(); ++i) theta[i] = normal(rng);
  return theta;
}

double LogisticRegression::loss(const ModelVector& theta, const LabeledDataset& data,
                                std::span<const Index> batch) const {
  require_batch(batch);
  ConstMatrixMap w(theta.data(), classes_, features_);
  const auto bias = theta.tail(classes_);
  Matrix<double> logits = gather_rows(data, batch) * w.transpose();
  logits.rowwise() += bias.transpose();
  return mean_cross_entropy(logits, data, batch);
}

ModelVector LogisticRegression::gradient(const ModelVector& theta, const LabeledDataset& data,
                                         std::span<const Index> batch) const {
  require_batch(batch);
  ConstMatrixMap w(theta.data(), classes_, features_);
  const Matrix<double> x = gather_rows(data, batch);
  Matrix<double> logits = x * w.transpose();
  logits.rowwise() += theta.tail(classes_).transpose();
  const Matrix<double> dz = cross_entropy_logit_gradient(logits, data, batch);

  ModelVector grad(parameter_count());
  MatrixMap(grad.data(), classes_, features_) = dz.transpose() * x;
  grad.tail(classes_) = dz.colwise().sum().transpose();
  return grad;
}

int LogisticRegression::predict(const ModelVector& theta, const Eigen::Ref<const Vector<double>>& example) const {
  ConstMatrixMap w(theta.data(), classes_, features_);
  return argmax(w * example + theta.tail(classes_));
}

// --- MLP ---------------------------------------------------------------------

Mlp::Mlp(Index features, Index hidden, int classes) : features_(features), hidden_(hidden), classes_(classes) {
  if (features < 1 || hidden < 1 || classes < 2) throw InvalidArgument("mlp: invalid layer sizes");
}

Index Mlp::parameter_count() const { return hidden_ * (features_ + 1) + classes_ * (hidden_ + 1); }

ModelVector Mlp::initial_parameters(Rng& rng) const {
  ModelVector theta = ModelVector::Zero(parameter_count());
  std::normal_distribution<double> first(0.0, std::sqrt(2.0 / static_cast<double>(features_)));
  std::normal_distribution<double> second(0.0, std::sqrt(1.0 / static_cast<double>(hidden_)));
  for (Index i = 0; i < hidden_ * features_; ++i) theta[i] = first(rng);
  const Index w2 = hidden_ * (features_ + 1);
  for (Index i = 0; i < classes_ * hidden_; ++i) theta[w2 + i] = second(rng);
  return theta;
}

double Mlp::loss(const ModelVector& theta, const LabeledDataset& data, std::span<const Index> batch) const {
  require_batch(batch);
  const Index o1 = hidden_ * features_;
  const Index o2 = o1 + hidden_;
  const Index o3 = o2 + classes_ * hidden_;
  ConstMatrixMap w1(theta.data(), hidden_, features_);
  ConstMatrixMap w2(theta.data() + o2, classes_, hidden_);

  Matrix<double> pre = gather_rows(data, batch) * w1.transpose();
  pre.rowwise() += theta.segment(o1, hidden_).transpose();
  const Matrix<double> act = pre.cwiseMax(0.0);
  Matrix<double> logits = act * w2.transpose();
  logits.rowwise() += theta.segment(o3, classes_).transpose();
  return mean_cross_entropy(logits, data, batch);
}

ModelVector Mlp::gradient(const ModelVector& theta, const LabeledDataset& data, std::span<const Index> batch) const {
  require_batch(batch);
  const Index o1 = hidden_ * features_;
  const Index o2 = o1 + hidden_;
  const Index o3 = o2 + classes_ * hidden_;
  ConstMatrixMap w1(theta.data(), hidden_, features_);
  ConstMatrixMap w2(theta.data() + o2, classes_, hidden_);

  const Matrix<double> x = gather_rows(data, batch);
  Matrix<double> pre = x * w1.transpose();
  pre.rowwise() += theta.segment(o1, hidden_).transpose();
  const Matrix<double> act = pre.cwiseMax(0.0);
  Matrix<double> logits = act * w2.transpose();
  logits.rowwise() += theta.segment(o3, classes_).transpose();

  const Matrix<double> dz = cross_entropy_logit_gradient(logits, data, batch);
  Matrix<double> dh = dz * w2;
  dh = dh.cwiseProduct((pre.array() > 0.0).cast<double>().matrix());

  ModelVector grad(parameter_count());
  MatrixMap(grad.data(), hidden_, features_) = dh.transpose() * x;
  grad.segment(o1, hidden_) = dh.colwise().sum().transpose();
  MatrixMap(grad.data() + o2, classes_, hidden_) = dz.transpose() * act;
  grad.segment(o3, classes_) = dz.colwise().sum().transpose();
  return grad;
}

int Mlp::predict(const ModelVector& theta, const Eigen::Ref<const Vector<double>>& example) const {
  const Index o1 = hidden_ * features_;
  const Index o2 = o1 + hidden_;
  const Index o3 = o2 + classes_ * hidden_;
  ConstMatrixMap w1(theta.data(), hidden_, features_);
  ConstMatrixMap w2(theta.data() + o2, classes_, hidden_);
  const Vector<double> act = (w1 * example + theta.segment(o1, hidden_)).cwiseMax(0.0);
  return argmax(w2 * act + theta.segment(o3, classes_));
}

// --- local training ----------------------------------------------------------

void LocalSGDConfig::validate() const {
  if (tau < 1) throw InvalidArgument("local sgd: tau must be >= 1");
  if (batch_size < 1) throw InvalidArgument("local sgd: batch_size must be >= 1");
  if (!learning_rate) throw InvalidArgument("local sgd: missing learning-rate schedule");
}

std::function<double(std::size_t, int)> constant_learning_rate(double eta) {
  return [eta](std::size_t, int) { return eta; };
}

std::vector<Index> sample_batch(Index n, Index batch_size, Rng& rng) {
  std::vector<Index> idx = all_indices(n);
  if (batch_size >= n) return idx;
  // Partial Fisher-Yates: the first batch_size slots are a uniform draw.
  for (Index i = 0; i < batch_size; ++i) {
    std::uniform_int_distribution<Index> pick(i, n - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  idx.resize(static_cast<std::size_t>(batch_size));
  return idx;
}

ModelVector local_update(const Learner& learner, const ModelVector& estimate, const LabeledDataset& shard,
                         const LocalSGDConfig& cfg, std::size_t round, OptimizerState& state, Rng& rng) {
  cfg.validate();
  if (shard.size() == 0) throw InvalidArgument("local_update: device has no data");

  ModelVector theta = estimate;
  if (cfg.optimizer == OptimizerKind::kAdam && state.first_moment.size() != theta.size()) {
    state.first_moment = ModelVector::Zero(theta.size());
    state.second_moment = ModelVector::Zero(theta.size());
    state.steps = 0;
  }
  for (int step = 1; step <= cfg.tau; ++step) {
    const double eta = cfg.learning_rate(round, step);
    if (!(eta >= 0.0)) throw InvalidArgument("local sgd: learning rate must be nonnegative");
    const auto batch = sample_batch(shard.size(), cfg.batch_size, rng);
    const ModelVector g = learner.gradient(theta, shard, batch);
    if (cfg.optimizer == OptimizerKind::kSgd) {
      theta -= eta * g;
      continue;
    }
    ++state.steps;
    const AdamParams& a = cfg.adam;
    state.first_moment = a.beta1 * state.first_moment + (1.0 - a.beta1) * g;
    state.second_moment = a.beta2 * state.second_moment + (1.0 - a.beta2) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(a.beta1, static_cast<double>(state.steps));
    const double c2 = 1.0 - std::pow(a.beta2, static_cast<double>(state.steps));
    theta.array() -= eta * (state.first_moment.array() / c1) /
                     ((state.second_moment.array() / c2).sqrt() + a.epsilon);
  }
  return theta - estimate;
}

double evaluate(const Learner& learner, const ModelVector& theta, const LabeledDataset& test_set) {
  if (test_set.size() == 0) throw InvalidArgument("evaluate: empty test set");
  Index correct = 0;
  for (Index i = 0; i < test_set.size(); ++i) {
    const Vector<double> x = test_set.features.row(i).transpose();
    if (learner.predict(theta, x) == test_set.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test_set.size());
}

}  // namespace feel
