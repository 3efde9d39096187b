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

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "feel/channel.hpp"
#include "feel/learner.hpp"
#include "feel/protocol.hpp"

namespace feel {

/** Config validation failure; the message starts with the JSON path. */
class ConfigError : public ParseError {
 public:
  using ParseError::ParseError;
};

struct DatasetConfig {
  enum class Mode { kSynthetic, kIdx };
  Mode mode = Mode::kSynthetic;
  int num_classes = 10;
  // synthetic
  Index per_class_train = 100;
  Index per_class_test = 100;
  Index dim = 10;
  double separation = 3.0;
  // idx
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  Index max_per_class = 0;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  Index devices = 1;   // M
  Index selected = 1;  // K
  std::size_t rounds = 1;

  int local_steps = 1;
  Index batch_size = 32;
  double learning_rate = 0.1;
  OptimizerKind optimizer = OptimizerKind::kSgd;

  std::string learner = "logistic";
  Index hidden = 32;

  DatasetConfig dataset;
  ChannelConfig channel;
  double power_dl = 1.0;
  double power_ul = 1.0;
  Aggregation aggregation = Aggregation::kUniform;
  bool baseline = false;
  int threads = 1;

  std::string output_dir = "out";
  std::string output_prefix = "run";

  nlohmann::json source;  // the validated input document, echoed into manifests
};

/// Parses and validates a config document. Unknown keys are rejected; seed,
/// devices, selected, rounds, channel and power are mandatory.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

/// FEEL_SEED, when set, replaces the config seed.
void apply_env_overrides(ExperimentConfig& config);

/// Materializes datasets, shards and learner for one run.
ExperimentSetup build_setup(const ExperimentConfig& config);

inline constexpr const char* kMetricsHeader =
    "round,selected,acc,loss,dl_bits_total,ul_bits_total,q_dl_min,q_dl_max,q_ul_min,q_ul_max";

/// CSV text: header plus one row per round. The selected set is one quoted
/// field of comma-separated device indices.
std::string metrics_csv(const std::vector<RoundReport>& reports);

struct RunArtifacts {
  std::filesystem::path csv;
  std::filesystem::path manifest;
};

/// Writes `<stem>.csv` and the `<stem>.json` run manifest. Throws
/// std::runtime_error when the directory cannot be written.
RunArtifacts emit_metrics(const std::vector<RoundReport>& reports, const std::filesystem::path& stem,
                          const ExperimentConfig& config, double wall_seconds);

/// Runs and emits one experiment under `stem`.
RunArtifacts run_and_emit(const ExperimentConfig& config, const std::filesystem::path& stem);

/// One run per K (same seed, hence the same channel draws), each written as
/// `<dir>/<prefix>_K<k>`. Baseline mode ignores K and writes a single
/// `<prefix>_baseline` run. An empty list writes nothing and prints a warning
/// to `warn`.
std::vector<RunArtifacts> sweep(const ExperimentConfig& config, const std::vector<Index>& k_values,
                                std::ostream& warn);

std::string build_id();

}  // namespace feel
