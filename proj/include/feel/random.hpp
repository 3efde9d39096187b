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
#include <initializer_list>
#include <random>
#include <string_view>

namespace feel {

using Rng = std::mt19937_64;

/// Derives independent, named random streams from one master seed.
///
/// A stream is identified by a name ("channel-dl", "quantizer-ul", ...) and a
/// short list of integer keys (device, round). Two streams with different
/// identities never share state, so enabling or disabling one consumer leaves
/// every other consumer's draws untouched.
class StreamFactory {
 public:
  explicit StreamFactory(std::uint64_t master_seed) : master_seed_(master_seed) {}

  std::uint64_t master_seed() const { return master_seed_; }

  Rng stream(std::string_view name, std::initializer_list<std::uint64_t> keys = {}) const;

 private:
  std::uint64_t master_seed_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace feel
