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
#include <span>

#include "feel/random.hpp"
#include "feel/types.hpp"

namespace feel {

/** Parallel fading channel dimensions and gain variances for both links. */
struct ChannelConfig {
  Index num_devices = 1;
  Index subchannels_dl = 1;
  Index subchannels_ul = 1;
  double sigma2_dl = 1.0;
  double sigma2_ul = 1.0;

  /// Throws InvalidArgument unless every field is in range.
  void validate() const;
};

/** One block-fading draw for one link, held fixed for a whole round. */
struct ChannelRealization {
  GainMatrix gains;  // devices x sub-channels
  std::size_t iteration = 0;

  Index devices() const { return gains.rows(); }
  Index subchannels() const { return gains.cols(); }

  /// Squared magnitudes |h|^2.
  Matrix<double> power_gains() const { return gains.cwiseAbs2(); }

  /// Rows for the listed devices, in the listed order.
  ChannelRealization restricted_to(std::span<const Index> devices) const;
};

/// Draws an M x s matrix with iid CN(0, sigma2) entries. The draw depends only
/// on (streams.master_seed(), t), never on how many other draws happened.
ChannelRealization draw_downlink(const ChannelConfig& config, const StreamFactory& streams,
                                 std::size_t t);
ChannelRealization draw_uplink(const ChannelConfig& config, const StreamFactory& streams,
                               std::size_t t);

/// Fills an M x s matrix with CN(0, sigma2) samples from `rng`.
GainMatrix draw_complex_gaussian(Index rows, Index cols, double sigma2, Rng& rng);

}  // namespace feel
