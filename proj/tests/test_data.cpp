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

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include <zlib.h>

#include "doctest.h"

#include "feel/data.hpp"
#include "feel/learner.hpp"

using feel::Index;
using feel::Rng;

TEST_SUITE("data") {

TEST_CASE("parse_idx: minimal vector") {
  const std::vector<std::uint8_t> bytes{0, 0, 0x08, 0x01, 0, 0, 0, 3, 7, 2, 9};
  const auto t = feel::parse_idx(bytes);
  CHECK(t.shape == std::vector<std::uint32_t>{3});
  CHECK(t.values == std::vector<std::uint8_t>{7, 2, 9});
}

TEST_CASE("parse_idx: rank 3") {
  std::vector<std::uint8_t> bytes{0, 0, 0x08, 0x03, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2};
  for (std::uint8_t i = 0; i < 8; ++i) bytes.push_back(i);
  const auto t = feel::parse_idx(bytes);
  CHECK(t.shape == std::vector<std::uint32_t>{2, 2, 2});
  CHECK(t.values.size() == 8);
  CHECK(t.values[7] == 7);
}

TEST_CASE("parse_idx: errors") {
  std::vector<std::uint8_t> truncated{0, 0, 0x08, 0x01, 0, 0, 0, 10};
  truncated.resize(truncated.size() + 9, 1);
  CHECK_THROWS_AS(feel::parse_idx(truncated), feel::ParseError);
  CHECK_THROWS_WITH_AS(feel::parse_idx(truncated), doctest::Contains("truncated body"), feel::ParseError);
  const std::vector<std::uint8_t> magic{1, 0, 0x08, 0x01, 0, 0, 0, 0};
  CHECK_THROWS_AS(feel::parse_idx(magic), feel::ParseError);
  const std::vector<std::uint8_t> dtype{0, 0, 0x0D, 0x01, 0, 0, 0, 0};
  CHECK_THROWS_WITH_AS(feel::parse_idx(dtype), doctest::Contains("dtype"), feel::ParseError);
  const std::vector<std::uint8_t> dims{0, 0, 0x08, 0x02, 0, 0, 0};
  CHECK_THROWS_AS(feel::parse_idx(dims), feel::ParseError);
}

TEST_CASE("property: write_idx then parse_idx is the identity") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    feel::IdxTensor t;
    std::size_t count = 1;
    for (int k = 0; k <= trial % 3; ++k) {
      t.shape.push_back(1 + static_cast<std::uint32_t>(rng() % 5));
      count *= t.shape.back();
    }
    for (std::size_t i = 0; i < count; ++i) t.values.push_back(static_cast<std::uint8_t>(rng()));
    const auto back = feel::parse_idx(feel::write_idx(t));
    CHECK(back.shape == t.shape);
    CHECK(back.values == t.values);
  }
}

TEST_CASE("read_idx_file handles raw and gzip files") {
  const auto dir = std::filesystem::temp_directory_path() / "feel_idx_test";
  std::filesystem::create_directories(dir);
  const feel::IdxTensor t{{2, 3}, {1, 2, 3, 4, 5, 6}};
  const auto bytes = feel::write_idx(t);
  {
    std::ofstream raw(dir / "raw.idx", std::ios::binary);
    raw.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  gzFile gz = gzopen((dir / "packed.idx.gz").string().c_str(), "wb");
  gzwrite(gz, bytes.data(), static_cast<unsigned>(bytes.size()));
  gzclose(gz);
  CHECK(feel::read_idx_file((dir / "raw.idx").string()).values == t.values);
  CHECK(feel::read_idx_file((dir / "packed.idx.gz").string()).shape == t.shape);
  CHECK_THROWS_AS(feel::read_idx_file((dir / "missing.idx").string()), feel::ParseError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("dataset_from_idx scales pixels and caps classes") {
  const feel::IdxTensor images{{3, 1, 2}, {0, 255, 51, 102, 255, 0}};
  const feel::IdxTensor labels{{3}, {1, 1, 0}};
  const auto ds = feel::dataset_from_idx(images, labels, 2);
  CHECK(ds.size() == 3);
  CHECK(ds.features(0, 1) == 1.0);
  CHECK(ds.features(1, 0) == doctest::Approx(0.2));
  const auto capped = feel::dataset_from_idx(images, labels, 2, 1);
  CHECK(capped.size() == 2);
  CHECK(capped.labels == std::vector<int>{1, 0});
}

TEST_CASE("shard_single_class: ten classes, one hundred devices") {
  Rng rng(1);
  const auto ds = feel::synth_classification(10, 53, 4, 1.0, rng);
  const auto plan = feel::shard_single_class(ds, 100, rng);
  CHECK(plan.assignment.size() == 100);
  CHECK(plan.dropped == 10 * 3);  // 53 = 10 * 5 + 3 per class
  std::set<Index> seen;
  for (std::size_t m = 0; m < plan.assignment.size(); ++m) {
    const auto& shard = plan.assignment[m];
    CHECK(shard.size() == 5);
    std::set<int> labels;
    for (Index i : shard) {
      labels.insert(ds.labels[static_cast<std::size_t>(i)]);
      CHECK(seen.insert(i).second);  // disjoint
    }
    CHECK(labels.size() == 1);
    CHECK(*labels.begin() == static_cast<int>(m / 10));
  }
  CHECK(static_cast<Index>(seen.size()) + plan.dropped == ds.size());
}

TEST_CASE("shard_single_class: one device per class covers everything") {
  Rng rng(2);
  const auto ds = feel::synth_classification(10, 7, 3, 1.0, rng);
  const auto plan = feel::shard_single_class(ds, 10, rng);
  CHECK(plan.dropped == 0);
  for (const auto& shard : plan.assignment) CHECK(shard.size() == 7);
  CHECK_THROWS_AS(feel::shard_single_class(ds, 15, rng), feel::InvalidArgument);
}

TEST_CASE("synth_classification shape and determinism") {
  Rng a(5), b(5);
  const auto x = feel::synth_classification(3, 1, 2, 1.0, a);
  CHECK(x.size() == 3);
  CHECK(x.labels == std::vector<int>{0, 1, 2});
  CHECK(x.features == feel::synth_classification(3, 1, 2, 1.0, b).features);
  Rng c(1);
  CHECK_THROWS_AS(feel::synth_classification(3, 1, 0, 1.0, c), feel::InvalidArgument);
  CHECK_THROWS_AS(feel::synth_classification(3, 1, 2, -1.0, c), feel::InvalidArgument);
}

TEST_CASE("synth_classification: learnability tracks separation") {
  // Centralized full-batch training is the oracle for both regimes.
  auto train_and_score = [](double separation) {
    Rng rng(21), test_rng(22);
    const auto train = feel::synth_classification(10, 100, 12, separation, rng);
    const auto test = feel::synth_classification(10, 200, 12, separation, test_rng);
    const feel::LogisticRegression model(12, 10);
    feel::ModelVector theta = feel::ModelVector::Zero(model.parameter_count());
    for (int step = 0; step < 300; ++step) theta -= 0.5 * model.gradient(theta, train);
    return feel::evaluate(model, theta, test);
  };
  CHECK(train_and_score(10.0) > 0.95);
  CHECK(std::abs(train_and_score(0.0) - 0.1) < 0.05);
}

}
