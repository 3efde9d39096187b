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

// feel: run federated-edge-learning experiments from a JSON config.
//
//   feel run --config PATH [--out DIR] [--sweep-k LIST] [--baseline] [--threads N]
//
// FEEL_SEED in the environment overrides the config seed.

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "feel/experiment.hpp"

namespace {

std::vector<feel::Index> parse_k_list(const std::string& text) {
  std::vector<feel::Index> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const long long v = std::stoll(item, &used);
    if (used != item.size()) throw feel::ConfigError("--sweep-k: not an integer: " + item);
    out.push_back(static_cast<feel::Index>(v));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated edge learning simulator"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run one experiment or a sweep over K");
  std::string config_path;
  std::string out_dir;
  std::string sweep_k;
  bool baseline = false;
  int threads = 0;
  run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Output directory (overrides output.dir)");
  auto* sweep_opt = run->add_option("--sweep-k", sweep_k, "Comma-separated K values, one run per value")
                        ->expected(0, 1);
  run->add_flag("--baseline", baseline, "Full participation with a common downlink rate");
  run->add_option("--threads", threads, "Worker threads inside a round (overrides config)")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    feel::ExperimentConfig config = feel::load_config(config_path);
    feel::apply_env_overrides(config);
    if (!out_dir.empty()) config.output_dir = out_dir;
    if (threads > 0) {
      config.threads = threads;
      config.source["threads"] = threads;
    }
    if (baseline) {
      config.baseline = true;
      config.source["baseline"] = true;
    }

    std::vector<feel::RunArtifacts> written;
    if (*sweep_opt) {
      written = feel::sweep(config, parse_k_list(sweep_k), std::cerr);
    } else {
      const std::string suffix = config.baseline ? "_baseline" : "_K" + std::to_string(config.selected);
      written.push_back(feel::run_and_emit(
          config, std::filesystem::path(config.output_dir) / (config.output_prefix + suffix)));
    }
    for (const auto& w : written) std::cout << w.csv.string() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
