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

#include "feel/data.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include <zlib.h>

namespace feel {

void LabeledDataset::validate() const {
  if (num_classes < 1) throw InvalidArgument("dataset: num_classes must be >= 1");
  if (features.rows() != size()) throw InvalidArgument("dataset: feature rows and label count differ");
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw InvalidArgument("dataset: label out of range");
  }
}

LabeledDataset LabeledDataset::subset(std::span<const Index> indices) const {
  LabeledDataset out;
  out.num_classes = num_classes;
  out.features.resize(static_cast<Index>(indices.size()), features.cols());
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    out.features.row(static_cast<Index>(r)) = features.row(indices[r]);
    out.labels.push_back(labels[static_cast<std::size_t>(indices[r])]);
  }
  return out;
}

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace

IdxTensor parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw ParseError("idx: truncated magic at byte 0");
  if (bytes[0] != 0 || bytes[1] != 0) throw ParseError("idx: bad magic at byte 0");
  if (bytes[2] != 0x08)
    throw ParseError("idx: unsupported dtype 0x" + std::to_string(bytes[2]) + " at byte 2 (only unsigned byte)");
  const std::size_t ndim = bytes[3];
  if (ndim == 0) throw ParseError("idx: zero dimensions at byte 3");
  if (bytes.size() < 4 + 4 * ndim) throw ParseError("idx: truncated dimension list at byte " + std::to_string(bytes.size()));

  IdxTensor t;
  std::uint64_t count = 1;
  for (std::size_t k = 0; k < ndim; ++k) {
    t.shape.push_back(read_be32(bytes, 4 + 4 * k));
    count *= t.shape.back();
  }
  const std::size_t body = 4 + 4 * ndim;
  if (bytes.size() - body < count)
    throw ParseError("idx: truncated body at byte " + std::to_string(bytes.size()) + ", expected " +
                     std::to_string(body + count));
  if (bytes.size() - body > count)
    throw ParseError("idx: trailing data at byte " + std::to_string(body + count));
  t.values.assign(bytes.begin() + static_cast<std::ptrdiff_t>(body), bytes.end());
  return t;
}

std::vector<std::uint8_t> write_idx(const IdxTensor& tensor) {
  std::vector<std::uint8_t> out{0, 0, 0x08, static_cast<std::uint8_t>(tensor.shape.size())};
  for (std::uint32_t dim : tensor.shape) {
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(dim >> shift));
  }
  out.insert(out.end(), tensor.values.begin(), tensor.values.end());
  return out;
}

IdxTensor read_idx_file(const std::string& path) {
  // gzread passes uncompressed files through unchanged.
  gzFile file = gzopen(path.c_str(), "rb");
  if (file == nullptr) throw ParseError("idx: cannot open " + path);
  std::vector<std::uint8_t> bytes;
  std::uint8_t buffer[1 << 16];
  int n = 0;
  while ((n = gzread(file, buffer, sizeof buffer)) > 0) bytes.insert(bytes.end(), buffer, buffer + n);
  const bool failed = n < 0;
  gzclose(file);
  if (failed) throw ParseError("idx: read error in " + path);
  try {
    return parse_idx(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

LabeledDataset dataset_from_idx(const IdxTensor& images, const IdxTensor& labels, int num_classes,
                                Index max_per_class) {
  if (images.shape.empty() || labels.shape.size() != 1 || images.shape[0] != labels.shape[0])
    throw InvalidArgument("idx: image and label counts differ");
  const Index n = images.shape[0];
  Index dim = 1;
  for (std::size_t k = 1; k < images.shape.size(); ++k) dim *= images.shape[k];

  std::vector<Index> keep;
  std::vector<Index> per_class(static_cast<std::size_t>(num_classes), 0);
  for (Index i = 0; i < n; ++i) {
    const int y = labels.values[static_cast<std::size_t>(i)];
    if (y >= num_classes) throw InvalidArgument("idx: label " + std::to_string(y) + " out of range");
    if (max_per_class > 0 && per_class[static_cast<std::size_t>(y)] >= max_per_class) continue;
    ++per_class[static_cast<std::size_t>(y)];
    keep.push_back(i);
  }

  LabeledDataset out;
  out.num_classes = num_classes;
  out.features.resize(static_cast<Index>(keep.size()), dim);
  for (std::size_t r = 0; r < keep.size(); ++r) {
    const std::size_t base = static_cast<std::size_t>(keep[r] * dim);
    for (Index c = 0; c < dim; ++c)
      out.features(static_cast<Index>(r), c) = images.values[base + static_cast<std::size_t>(c)] / 255.0;
    out.labels.push_back(labels.values[static_cast<std::size_t>(keep[r])]);
  }
  return out;
}

ShardingPlan shard_single_class(const LabeledDataset& dataset, Index num_devices, Rng& rng) {
  dataset.validate();
  if (num_devices < 1 || num_devices % dataset.num_classes != 0)
    throw InvalidArgument("shard_single_class: M must be a positive multiple of num_classes");
  const Index groups = num_devices / dataset.num_classes;

  ShardingPlan plan;
  plan.assignment.resize(static_cast<std::size_t>(num_devices));
  for (int c = 0; c < dataset.num_classes; ++c) {
    std::vector<Index> members;
    for (Index i = 0; i < dataset.size(); ++i) {
      if (dataset.labels[static_cast<std::size_t>(i)] == c) members.push_back(i);
    }
    std::shuffle(members.begin(), members.end(), rng);
    const Index group_size = static_cast<Index>(members.size()) / groups;
    plan.dropped += static_cast<Index>(members.size()) - group_size * groups;
    for (Index g = 0; g < groups; ++g) {
      auto& shard = plan.assignment[static_cast<std::size_t>(c * groups + g)];
      shard.assign(members.begin() + g * group_size, members.begin() + (g + 1) * group_size);
      std::sort(shard.begin(), shard.end());
    }
  }
  return plan;
}

LabeledDataset synth_classification(int num_classes, Index per_class, Index dim, double separation,
                                    Rng& rng) {
  if (num_classes < 1) throw InvalidArgument("synth_classification: num_classes must be >= 1");
  if (per_class < 1) throw InvalidArgument("synth_classification: per_class must be >= 1");
  if (dim < 1) throw InvalidArgument("synth_classification: dim must be >= 1");
  if (!(separation >= 0.0)) throw InvalidArgument("synth_classification: separation must be >= 0");

  Matrix<double> centers = Matrix<double>::Zero(num_classes, dim);
  if (dim >= num_classes) {
    for (int c = 0; c < num_classes; ++c) centers(c, c) = 1.0;
  } else {
    Rng fixed(0x5eedc3a7e25ULL);
    std::normal_distribution<double> normal;
    for (int c = 0; c < num_classes; ++c) {
      for (Index j = 0; j < dim; ++j) centers(c, j) = normal(fixed);
      centers.row(c).normalize();
    }
  }
  centers *= separation;

  LabeledDataset out;
  out.num_classes = num_classes;
  out.features.resize(num_classes * per_class, dim);
  out.labels.reserve(static_cast<std::size_t>(num_classes * per_class));
  std::normal_distribution<double> noise;
  for (int c = 0; c < num_classes; ++c) {
    for (Index n = 0; n < per_class; ++n) {
      const Index row = c * per_class + n;
      for (Index j = 0; j < dim; ++j) out.features(row, j) = centers(c, j) + noise(rng);
      out.labels.push_back(c);
    }
  }
  return out;
}

}  // namespace feel
