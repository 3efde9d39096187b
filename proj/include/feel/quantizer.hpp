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
#include <limits>
#include <vector>

#include "feel/random.hpp"
#include "feel/types.hpp"

namespace feel {

/// Largest quantization level representable in the 32-bit wire header.
inline constexpr std::uint32_t kMaxQuantizationLevel = std::numeric_limits<std::uint32_t>::max();

/// Stochastically quantized vector: sign(x_i) * (x_min + (x_max - x_min) * level_i / q).
///
/// The magnitude extremes are held as binary32 so that the in-memory payload
/// is exactly what goes on the wire. quantize() rounds x_min down and x_max up
/// to the nearest binary32, so every |x_i| lies inside [x_min, x_max].
struct QuantizedPayload {
  float x_min = 0.0f;
  float x_max = 0.0f;
  std::uint32_t q = 1;
  std::vector<std::uint8_t> negative;  // one flag per entry; sign(0) is +
  std::vector<std::uint32_t> levels;   // each in [0, q]

  Index size() const { return static_cast<Index>(levels.size()); }
  bool operator==(const QuantizedPayload&) const = default;
};

/** Per-device, per-round channel capacity handed to the quantizer. */
struct BitBudget {
  double bits = 0.0;
};

/// Draws Q(x, q). Throws InvalidArgument for q == 0 ("no budget"), an empty
/// vector, non-finite entries, or magnitudes beyond binary32 range.
QuantizedPayload quantize(const Eigen::Ref<const ModelVector>& x, std::uint32_t q, Rng& rng);

/// Deterministic reconstruction. Throws ParseError on a level above q.
ModelVector dequantize(const QuantizedPayload& payload);

/// Idealized payload size: 64 + d (1 + log2(q + 1)) bits. Used for every
/// budget decision.
double bit_count(Index d, std::uint32_t q);

/// Bits per level field on the wire: ceil(log2(q + 1)).
unsigned level_field_width(std::uint32_t q);

/// Physical body size: 64 + d (1 + ceil(log2(q + 1))) bits, before padding.
std::uint64_t serialized_body_bits(Index d, std::uint32_t q);

/// Largest q >= 1 with bit_count(d, q) <= budget.bits, capped at
/// kMaxQuantizationLevel; 0 when even q = 1 does not fit.
std::uint32_t max_level_for_budget(Index d, BitBudget budget);

/// Wire format, all fields MSB-first:
///   header: d (u32), q (u32)
///   body:   x_min (binary32), x_max (binary32), d sign bits (1 = negative),
///           d level fields of level_field_width(q) bits, zero padding to a byte.
std::vector<std::uint8_t> serialize(const QuantizedPayload& payload);

/// Inverse of serialize(). Throws ParseError on truncated or oversized input,
/// a header/d mismatch, a zero q, or a level above q.
QuantizedPayload parse(const std::vector<std::uint8_t>& bytes, Index d);

}  // namespace feel
