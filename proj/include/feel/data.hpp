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
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "feel/random.hpp"
#include "feel/types.hpp"

namespace feel {

/** Features stored one example per row. */
struct LabeledDataset {
  Matrix<double> features;
  std::vector<int> labels;
  int num_classes = 0;

  Index size() const { return static_cast<Index>(labels.size()); }
  Index feature_dim() const { return features.cols(); }

  /// Throws InvalidArgument on shape mismatch or out-of-range labels.
  void validate() const;

  /// Rows `indices` in the given order.
  LabeledDataset subset(std::span<const Index> indices) const;
};

/** Per-device example indices into a shared pool. */
struct ShardingPlan {
  std::vector<std::vector<Index>> assignment;
  Index dropped = 0;  // class remainders left unassigned
};

/** Decoded IDX file: shape plus raw unsigned bytes in row-major order. */
struct IdxTensor {
  std::vector<std::uint32_t> shape;
  std::vector<std::uint8_t> values;
};

/// Parses an in-memory IDX buffer. Only the unsigned-byte dtype (0x08) is
/// supported; anything else, a bad magic, or a length mismatch throws
/// ParseError with the offending byte offset.
IdxTensor parse_idx(std::span<const std::uint8_t> bytes);

/// Inverse of parse_idx for unsigned-byte tensors.
std::vector<std::uint8_t> write_idx(const IdxTensor& tensor);

/// Reads a raw or gzip-compressed IDX file from disk.
IdxTensor read_idx_file(const std::string& path);

/// Builds a dataset from IDX image (N x rows x cols) and label (N) tensors,
/// scaling pixels into [0, 1]. `max_per_class` > 0 keeps only the first
/// that many examples of each class.
LabeledDataset dataset_from_idx(const IdxTensor& images, const IdxTensor& labels, int num_classes = 10,
                                Index max_per_class = 0);

/// Splits every class into M / num_classes equal disjoint groups, one group
/// per device, so each device holds a single label. Devices c*G .. c*G+G-1
/// receive class c, where G = M / num_classes.
ShardingPlan shard_single_class(const LabeledDataset& dataset, Index num_devices, Rng& rng);

/// Gaussian blobs: class c centered at separation * u_c with unit isotropic
/// noise. u_c is the c-th basis vector when dim >= num_classes and a fixed
/// pseudo-random unit vector otherwise, so independent draws share centers.
/// Examples are ordered by class.
LabeledDataset synth_classification(int num_classes, Index per_class, Index dim, double separation,
                                    Rng& rng);

}  // namespace feel
