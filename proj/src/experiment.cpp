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

#include "feel/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <iostream>
#include <set>
#include <sstream>

#include "feel/data.hpp"

#ifndef FEEL_BUILD_ID
#define FEEL_BUILD_ID "unknown"
#endif

namespace feel {

using nlohmann::json;

namespace {

// Typed access to one JSON object with the path carried into every error.
class Fields {
 public:
  Fields(const json& obj, std::string path, std::initializer_list<const char*> allowed)
      : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) fail(path_, "must be an object");
    std::set<std::string> known(allowed.begin(), allowed.end());
    for (const auto& item : obj_.items()) {
      if (!known.count(item.key())) fail(at(item.key()), "unknown key");
    }
  }

  bool has(const char* key) const { return obj_.contains(key); }

  const json& require(const char* key) const {
    if (!obj_.contains(key)) fail(at(key), "missing required field");
    return obj_.at(key);
  }

  std::int64_t integer(const char* key, std::int64_t min, std::int64_t fallback, bool required = false) const {
    if (!has(key)) {
      if (required) require(key);
      return fallback;
    }
    const json& v = obj_.at(key);
    if (!v.is_number_integer()) fail(at(key), "must be an integer");
    const auto value = v.get<std::int64_t>();
    if (value < min) fail(at(key), "must be >= " + std::to_string(min));
    return value;
  }

  std::uint64_t unsigned_integer(const char* key) const {
    const json& v = require(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      fail(at(key), "must be a nonnegative integer");
    return v.get<std::uint64_t>();
  }

  double positive(const char* key, double fallback, bool required = false) const {
    if (!has(key)) {
      if (required) require(key);
      return fallback;
    }
    const double value = number(key);
    if (!(value > 0.0)) fail(at(key), "must be positive");
    return value;
  }

  double number(const char* key) const {
    const json& v = require(key);
    if (!v.is_number()) fail(at(key), "must be a number");
    const double value = v.get<double>();
    if (!std::isfinite(value)) fail(at(key), "must be finite");
    return value;
  }

  std::string text(const char* key, const std::string& fallback, bool required = false) const {
    if (!has(key)) {
      if (required) require(key);
      return fallback;
    }
    const json& v = obj_.at(key);
    if (!v.is_string()) fail(at(key), "must be a string");
    return v.get<std::string>();
  }

  bool boolean(const char* key, bool fallback) const {
    if (!has(key)) return fallback;
    const json& v = obj_.at(key);
    if (!v.is_boolean()) fail(at(key), "must be a boolean");
    return v.get<bool>();
  }

  std::string at(const std::string& key) const { return path_ + "." + key; }

  [[noreturn]] static void fail(const std::string& path, const std::string& message) {
    throw ConfigError("config: " + path + ": " + message);
  }

 private:
  const json& obj_;
  std::string path_;
};

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  Fields root(doc, "$",
              {"seed", "devices", "selected", "rounds", "local", "learner", "dataset", "channel", "power",
               "aggregation", "baseline", "threads", "output"});
  ExperimentConfig c;
  c.seed = root.unsigned_integer("seed");
  c.devices = root.integer("devices", 1, 0, true);
  c.selected = root.integer("selected", 1, 0, true);
  if (c.selected > c.devices) Fields::fail("$.selected", "must be <= devices");
  c.rounds = static_cast<std::size_t>(root.integer("rounds", 1, 0, true));
  c.baseline = root.boolean("baseline", false);
  c.threads = static_cast<int>(root.integer("threads", 1, 1));

  const std::string aggregation = root.text("aggregation", "uniform");
  if (aggregation == "uniform") {
    c.aggregation = Aggregation::kUniform;
  } else if (aggregation == "size-weighted") {
    c.aggregation = Aggregation::kSizeWeighted;
  } else {
    Fields::fail("$.aggregation", "expected \"uniform\" or \"size-weighted\"");
  }

  if (root.has("local")) {
    Fields local(doc.at("local"), "$.local", {"steps", "batch_size", "learning_rate", "optimizer"});
    c.local_steps = static_cast<int>(local.integer("steps", 1, 1));
    c.batch_size = local.integer("batch_size", 1, 32);
    c.learning_rate = local.positive("learning_rate", 0.1);
    const std::string opt = local.text("optimizer", "sgd");
    if (opt == "sgd") {
      c.optimizer = OptimizerKind::kSgd;
    } else if (opt == "adam") {
      c.optimizer = OptimizerKind::kAdam;
    } else {
      Fields::fail("$.local.optimizer", "expected \"sgd\" or \"adam\"");
    }
  }

  if (root.has("learner")) {
    Fields learner(doc.at("learner"), "$.learner", {"kind", "hidden"});
    c.learner = learner.text("kind", "logistic");
    if (c.learner != "logistic" && c.learner != "mlp")
      Fields::fail("$.learner.kind", "expected \"logistic\" or \"mlp\"");
    c.hidden = learner.integer("hidden", 1, 32);
  }

  if (root.has("dataset")) {
    const json& ds = doc.at("dataset");
    std::string mode = "synthetic";
    if (ds.is_object() && ds.contains("mode")) {
      if (!ds.at("mode").is_string()) Fields::fail("$.dataset.mode", "must be a string");
      mode = ds.at("mode").get<std::string>();
    }
    if (mode == "synthetic") {
      Fields f(ds, "$.dataset", {"mode", "num_classes", "per_class_train", "per_class_test", "dim", "separation"});
      c.dataset.mode = DatasetConfig::Mode::kSynthetic;
      c.dataset.num_classes = static_cast<int>(f.integer("num_classes", 2, 10));
      c.dataset.per_class_train = f.integer("per_class_train", 1, 100);
      c.dataset.per_class_test = f.integer("per_class_test", 1, 100);
      c.dataset.dim = f.integer("dim", 1, 10);
      if (f.has("separation")) {
        c.dataset.separation = f.number("separation");
        if (c.dataset.separation < 0.0) Fields::fail("$.dataset.separation", "must be >= 0");
      }
    } else if (mode == "idx") {
      Fields f(ds, "$.dataset",
               {"mode", "num_classes", "train_images", "train_labels", "test_images", "test_labels", "max_per_class"});
      c.dataset.mode = DatasetConfig::Mode::kIdx;
      c.dataset.num_classes = static_cast<int>(f.integer("num_classes", 2, 10));
      c.dataset.train_images = f.text("train_images", "", true);
      c.dataset.train_labels = f.text("train_labels", "", true);
      c.dataset.test_images = f.text("test_images", "", true);
      c.dataset.test_labels = f.text("test_labels", "", true);
      c.dataset.max_per_class = f.integer("max_per_class", 0, 0);
    } else {
      Fields::fail("$.dataset.mode", "expected \"synthetic\" or \"idx\"");
    }
  }
  if (c.devices % c.dataset.num_classes != 0)
    Fields::fail("$.devices", "must be divisible by the number of classes");

  {
    Fields ch(root.require("channel"), "$.channel", {"s_dl", "s_ul", "sigma2_dl", "sigma2_ul"});
    c.channel.num_devices = c.devices;
    c.channel.subchannels_dl = ch.integer("s_dl", 1, 0, true);
    c.channel.subchannels_ul = ch.integer("s_ul", 1, 0, true);
    c.channel.sigma2_dl = ch.positive("sigma2_dl", 0.0, true);
    c.channel.sigma2_ul = ch.positive("sigma2_ul", 0.0, true);
  }
  {
    Fields pw(root.require("power"), "$.power", {"downlink", "uplink"});
    c.power_dl = pw.positive("downlink", 0.0, true);
    c.power_ul = pw.positive("uplink", 0.0, true);
  }
  if (root.has("output")) {
    Fields out(doc.at("output"), "$.output", {"dir", "prefix"});
    c.output_dir = out.text("dir", c.output_dir);
    c.output_prefix = out.text("prefix", c.output_prefix);
  }
  c.source = doc;
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

void apply_env_overrides(ExperimentConfig& config) {
  const char* seed = std::getenv("FEEL_SEED");
  if (seed == nullptr || *seed == '\0') return;
  char* end = nullptr;
  const unsigned long long value = std::strtoull(seed, &end, 10);
  if (end == nullptr || *end != '\0') throw ConfigError("config: FEEL_SEED must be a nonnegative integer");
  config.seed = value;
  config.source["seed"] = value;
}

ExperimentSetup build_setup(const ExperimentConfig& config) {
  const StreamFactory streams(config.seed);
  LabeledDataset train;
  LabeledDataset test;
  if (config.dataset.mode == DatasetConfig::Mode::kSynthetic) {
    Rng train_rng = streams.stream("data-synth-train");
    Rng test_rng = streams.stream("data-synth-test");
    const auto& ds = config.dataset;
    train = synth_classification(ds.num_classes, ds.per_class_train, ds.dim, ds.separation, train_rng);
    test = synth_classification(ds.num_classes, ds.per_class_test, ds.dim, ds.separation, test_rng);
  } else {
    const auto& ds = config.dataset;
    train = dataset_from_idx(read_idx_file(ds.train_images), read_idx_file(ds.train_labels), ds.num_classes,
                             ds.max_per_class);
    test = dataset_from_idx(read_idx_file(ds.test_images), read_idx_file(ds.test_labels), ds.num_classes);
  }

  Rng shuffle = streams.stream("data-shuffle");
  const ShardingPlan plan = shard_single_class(train, config.devices, shuffle);
  if (plan.dropped > 0)
    std::clog << "sharding: dropped " << plan.dropped << " class-remainder examples\n";

  ExperimentSetup setup;
  setup.seed = config.seed;
  setup.channel = config.channel;
  setup.channel.num_devices = config.devices;
  setup.protocol.selected = config.selected;
  setup.protocol.power_dl = config.power_dl;
  setup.protocol.power_ul = config.power_ul;
  setup.protocol.aggregation = config.aggregation;
  setup.protocol.baseline = config.baseline;
  setup.protocol.threads = config.threads;
  setup.protocol.sgd.tau = config.local_steps;
  setup.protocol.sgd.batch_size = config.batch_size;
  setup.protocol.sgd.learning_rate = constant_learning_rate(config.learning_rate);
  setup.protocol.sgd.optimizer = config.optimizer;
  if (config.learner == "mlp") {
    setup.learner = std::make_shared<Mlp>(train.feature_dim(), config.hidden, train.num_classes);
  } else {
    setup.learner = std::make_shared<LogisticRegression>(train.feature_dim(), train.num_classes);
  }
  for (const auto& shard : plan.assignment) setup.shards.push_back(train.subset(shard));
  setup.test_set = std::move(test);
  return setup;
}

std::string metrics_csv(const std::vector<RoundReport>& reports) {
  std::ostringstream out;
  out << kMetricsHeader << '\n';
  for (const RoundReport& r : reports) {
    std::uint32_t dl_min = 0, dl_max = 0, ul_min = 0, ul_max = 0;
    bool dl_any = false, ul_any = false;
    for (const auto& l : r.downlink) {
      if (l.q == 0) continue;
      dl_min = dl_any ? std::min(dl_min, l.q) : l.q;
      dl_max = std::max(dl_max, l.q);
      dl_any = true;
    }
    for (const auto& l : r.uplink) {
      if (l.q == 0) continue;
      ul_min = ul_any ? std::min(ul_min, l.q) : l.q;
      ul_max = std::max(ul_max, l.q);
      ul_any = true;
    }
    out << r.round << ",\"";
    for (std::size_t i = 0; i < r.selected.size(); ++i) out << (i ? "," : "") << r.selected[i];
    out << "\"," << format_number(r.accuracy) << ',' << format_number(r.loss) << ','
        << format_number(r.dl_bits_total) << ',' << format_number(r.ul_bits_total) << ',' << dl_min << ','
        << dl_max << ',' << ul_min << ',' << ul_max << '\n';
  }
  return out.str();
}

std::string build_id() { return FEEL_BUILD_ID; }

RunArtifacts emit_metrics(const std::vector<RoundReport>& reports, const std::filesystem::path& stem,
                          const ExperimentConfig& config, double wall_seconds) {
  RunArtifacts out{stem, stem};
  out.csv += ".csv";
  out.manifest += ".json";
  if (stem.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(stem.parent_path(), ec);
    if (ec) throw std::runtime_error("metrics: cannot create " + stem.parent_path().string() + ": " + ec.message());
  }
  {
    std::ofstream csv(out.csv, std::ios::binary);
    if (!csv) throw std::runtime_error("metrics: cannot write " + out.csv.string());
    csv << metrics_csv(reports);
    if (!csv) throw std::runtime_error("metrics: write failed for " + out.csv.string());
  }
  json manifest = {
      {"config", config.source},
      {"seed", config.seed},
      {"selected", config.selected},
      {"baseline", config.baseline},
      {"rounds", reports.size()},
      {"build_id", build_id()},
      {"wall_time_seconds", wall_seconds},
      {"csv", out.csv.filename().string()},
  };
  std::ofstream m(out.manifest);
  if (!m) throw std::runtime_error("metrics: cannot write " + out.manifest.string());
  m << manifest.dump(2) << '\n';
  return out;
}

RunArtifacts run_and_emit(const ExperimentConfig& config, const std::filesystem::path& stem) {
  const auto start = std::chrono::steady_clock::now();
  const auto reports = run_experiment(build_setup(config), config.rounds);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return emit_metrics(reports, stem, config, wall);
}

std::vector<RunArtifacts> sweep(const ExperimentConfig& config, const std::vector<Index>& k_values,
                                std::ostream& warn) {
  if (k_values.empty()) {
    warn << "warning: empty K sweep, nothing to run\n";
    return {};
  }
  for (Index k : k_values) {
    if (k < 1 || k > config.devices)
      throw ConfigError("sweep: K = " + std::to_string(k) + " outside [1, " + std::to_string(config.devices) + "]");
  }
  std::vector<RunArtifacts> out;
  const std::filesystem::path dir = config.output_dir;
  for (Index k : k_values) {
    // Baseline ignores K, so one run covers the whole list.
    if (config.baseline && !out.empty()) break;
    ExperimentConfig run = config;
    run.selected = config.baseline ? config.devices : k;
    run.source["selected"] = run.selected;
    const std::string suffix = config.baseline ? "_baseline" : "_K" + std::to_string(k);
    out.push_back(run_and_emit(run, dir / (config.output_prefix + suffix)));
  }
  return out;
}

}  // namespace feel
