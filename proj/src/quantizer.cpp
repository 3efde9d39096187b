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

#include "feel/quantizer.hpp"

#include <bit>
#include <cmath>
#include <random>
#include <string>

namespace feel {

namespace {

class BitWriter {
 public:
  void put(std::uint64_t value, unsigned width) {
    for (unsigned b = width; b-- > 0;) {
      if (bit_ % 8 == 0) bytes_.push_back(0);
      if ((value >> b) & 1u) bytes_.back() |= static_cast<std::uint8_t>(0x80u >> (bit_ % 8));
      ++bit_;
    }
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
  std::uint64_t bit_ = 0;
};

class BitReader {
 public:
  explicit BitReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint64_t get(unsigned width) {
    if (bit_ + width > bytes_.size() * 8)
      throw ParseError("payload: truncated at bit " + std::to_string(bit_));
    std::uint64_t value = 0;
    for (unsigned b = 0; b < width; ++b, ++bit_) {
      const unsigned bit = (bytes_[bit_ / 8] >> (7 - bit_ % 8)) & 1u;
      value = (value << 1) | bit;
    }
    return value;
  }
  std::uint64_t position() const { return bit_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::uint64_t bit_ = 0;
};

float round_toward_zero_float(double v) {
  float f = static_cast<float>(v);
  if (static_cast<double>(f) > v) f = std::nextafter(f, 0.0f);
  return f;
}

float round_up_float(double v) {
  float f = static_cast<float>(v);
  if (static_cast<double>(f) < v) f = std::nextafter(f, std::numeric_limits<float>::infinity());
  return f;
}

double reconstruct_magnitude(const QuantizedPayload& p, std::uint32_t level) {
  if (level == 0) return p.x_min;
  if (level == p.q) return p.x_max;
  const double range = static_cast<double>(p.x_max) - static_cast<double>(p.x_min);
  return std::fma(range, static_cast<double>(level) / static_cast<double>(p.q), static_cast<double>(p.x_min));
}

}  // namespace

QuantizedPayload quantize(const Eigen::Ref<const ModelVector>& x, std::uint32_t q, Rng& rng) {
  if (q == 0) throw InvalidArgument("quantize: no budget (q = 0); skip the transmission instead");
  if (x.size() < 1) throw InvalidArgument("quantize: empty vector");
  if (!x.allFinite()) throw InvalidArgument("quantize: non-finite entry");

  const double lo = x.cwiseAbs().minCoeff();
  const double hi = x.cwiseAbs().maxCoeff();
  if (hi > static_cast<double>(std::numeric_limits<float>::max()))
    throw InvalidArgument("quantize: magnitude exceeds binary32 range");

  QuantizedPayload p;
  p.q = q;
  p.x_min = round_toward_zero_float(lo);
  p.x_max = round_up_float(hi);
  p.negative.resize(static_cast<std::size_t>(x.size()));
  p.levels.resize(static_cast<std::size_t>(x.size()));

  const double x_min = p.x_min;
  const double range = static_cast<double>(p.x_max) - x_min;
  const double qd = static_cast<double>(q);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  for (Index i = 0; i < x.size(); ++i) {
    const auto slot = static_cast<std::size_t>(i);
    p.negative[slot] = x[i] < 0.0 ? 1 : 0;
    const double magnitude = std::abs(x[i]);
    if (range == 0.0 || magnitude <= x_min) {
      p.levels[slot] = 0;
      continue;
    }
    if (magnitude >= p.x_max) {
      p.levels[slot] = q;
      continue;
    }
    const double scaled = (magnitude - x_min) / range * qd;
    double floor_level = std::floor(scaled);
    if (floor_level > qd - 1.0) floor_level = qd - 1.0;
    const double p_up = scaled - floor_level;
    // One uniform draw per interior entry keeps the stream layout independent of the outcome.
    const bool up = uniform(rng) < p_up;
    p.levels[slot] = static_cast<std::uint32_t>(floor_level) + (up ? 1u : 0u);
  }
  return p;
}

ModelVector dequantize(const QuantizedPayload& payload) {
  if (payload.q == 0) throw ParseError("dequantize: q must be >= 1");
  if (payload.negative.size() != payload.levels.size())
    throw ParseError("dequantize: sign and level counts differ");
  ModelVector out(payload.size());
  for (Index i = 0; i < payload.size(); ++i) {
    const auto slot = static_cast<std::size_t>(i);
    const std::uint32_t level = payload.levels[slot];
    if (level > payload.q)
      throw ParseError("dequantize: level " + std::to_string(level) + " exceeds q at entry " + std::to_string(i));
    const double magnitude = reconstruct_magnitude(payload, level);
    out[i] = payload.negative[slot] ? -magnitude : magnitude;
  }
  return out;
}

double bit_count(Index d, std::uint32_t q) {
  return 64.0 + static_cast<double>(d) * (1.0 + std::log2(static_cast<double>(q) + 1.0));
}

unsigned level_field_width(std::uint32_t q) {
  // ceil(log2(q + 1)) == bit width of q for q >= 1.
  return static_cast<unsigned>(std::bit_width(q));
}

std::uint64_t serialized_body_bits(Index d, std::uint32_t q) {
  return 64u + static_cast<std::uint64_t>(d) * (1u + level_field_width(q));
}

std::uint32_t max_level_for_budget(Index d, BitBudget budget) {
  if (d < 1) throw InvalidArgument("max_level_for_budget: d must be >= 1");
  if (!(budget.bits >= 0.0)) throw InvalidArgument("max_level_for_budget: budget must be nonnegative");
  if (bit_count(d, 1) > budget.bits) return 0;
  if (bit_count(d, kMaxQuantizationLevel) <= budget.bits) return kMaxQuantizationLevel;

  const double exponent = (budget.bits - 64.0) / static_cast<double>(d) - 1.0;
  double guess = std::floor(std::exp2(exponent)) - 1.0;
  guess = std::clamp(guess, 1.0, static_cast<double>(kMaxQuantizationLevel));
  auto q = static_cast<std::uint32_t>(guess);
  // The closed form can be off by one either way after rounding; settle on the
  // exact boundary with the accounting formula itself.
  while (q > 1 && bit_count(d, q) > budget.bits) --q;
  while (q < kMaxQuantizationLevel && bit_count(d, q + 1) <= budget.bits) ++q;
  return q;
}

std::vector<std::uint8_t> serialize(const QuantizedPayload& payload) {
  if (payload.q == 0) throw InvalidArgument("serialize: q must be >= 1");
  if (payload.negative.size() != payload.levels.size())
    throw InvalidArgument("serialize: sign and level counts differ");
  if (payload.levels.size() > std::numeric_limits<std::uint32_t>::max())
    throw InvalidArgument("serialize: d exceeds 32-bit header");

  const unsigned width = level_field_width(payload.q);
  BitWriter w;
  w.put(payload.levels.size(), 32);
  w.put(payload.q, 32);
  w.put(std::bit_cast<std::uint32_t>(payload.x_min), 32);
  w.put(std::bit_cast<std::uint32_t>(payload.x_max), 32);
  for (std::uint8_t neg : payload.negative) w.put(neg ? 1u : 0u, 1);
  for (std::uint32_t level : payload.levels) {
    if (level > payload.q) throw InvalidArgument("serialize: level exceeds q");
    w.put(level, width);
  }
  return w.take();
}

QuantizedPayload parse(const std::vector<std::uint8_t>& bytes, Index d) {
  BitReader r(bytes);
  const std::uint64_t header_d = r.get(32);
  if (d < 0 || header_d != static_cast<std::uint64_t>(d))
    throw ParseError("payload: header d = " + std::to_string(header_d) + ", expected " + std::to_string(d));

  QuantizedPayload p;
  p.q = static_cast<std::uint32_t>(r.get(32));
  if (p.q == 0) throw ParseError("payload: q = 0 in header");
  p.x_min = std::bit_cast<float>(static_cast<std::uint32_t>(r.get(32)));
  p.x_max = std::bit_cast<float>(static_cast<std::uint32_t>(r.get(32)));
  if (!(p.x_min >= 0.0f) || !(p.x_max >= p.x_min) || !std::isfinite(p.x_max))
    throw ParseError("payload: invalid magnitude extremes");

  const auto n = static_cast<std::size_t>(d);
  p.negative.resize(n);
  p.levels.resize(n);
  for (std::size_t i = 0; i < n; ++i) p.negative[i] = static_cast<std::uint8_t>(r.get(1));
  const unsigned width = level_field_width(p.q);
  for (std::size_t i = 0; i < n; ++i) {
    const auto level = static_cast<std::uint32_t>(r.get(width));
    if (level > p.q)
      throw ParseError("payload: level " + std::to_string(level) + " exceeds q at entry " + std::to_string(i));
    p.levels[i] = level;
  }
  const std::uint64_t padded = (r.position() + 7) / 8;
  if (bytes.size() != padded)
    throw ParseError("payload: expected " + std::to_string(padded) + " bytes, got " + std::to_string(bytes.size()));
  return p;
}

}  // namespace feel
