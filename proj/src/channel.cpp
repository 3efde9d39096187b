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

#include "feel/channel.hpp"

#include <cmath>
#include <random>
#include <string>

namespace feel {

void ChannelConfig::validate() const {
  if (num_devices < 1) throw InvalidArgument("channel: num_devices must be >= 1");
  if (subchannels_dl < 1) throw InvalidArgument("channel: s_dl must be >= 1");
  if (subchannels_ul < 1) throw InvalidArgument("channel: s_ul must be >= 1");
  if (!(sigma2_dl > 0.0) || !std::isfinite(sigma2_dl))
    throw InvalidArgument("channel: sigma2_dl must be positive and finite");
  if (!(sigma2_ul > 0.0) || !std::isfinite(sigma2_ul))
    throw InvalidArgument("channel: sigma2_ul must be positive and finite");
}

ChannelRealization ChannelRealization::restricted_to(std::span<const Index> devices) const {
  ChannelRealization out;
  out.iteration = iteration;
  out.gains.resize(static_cast<Index>(devices.size()), gains.cols());
  for (std::size_t r = 0; r < devices.size(); ++r) {
    if (devices[r] < 0 || devices[r] >= gains.rows())
      throw InvalidArgument("channel: device index " + std::to_string(devices[r]) + " out of range");
    out.gains.row(static_cast<Index>(r)) = gains.row(devices[r]);
  }
  return out;
}

GainMatrix draw_complex_gaussian(Index rows, Index cols, double sigma2, Rng& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(sigma2 / 2.0));
  GainMatrix g(rows, cols);
  // Row-major fill order keeps a device's gains contiguous in the stream.
  for (Index m = 0; m < rows; ++m) {
    for (Index i = 0; i < cols; ++i) {
      const double re = normal(rng);
      const double im = normal(rng);
      g(m, i) = {re, im};
    }
  }
  return g;
}

ChannelRealization draw_downlink(const ChannelConfig& config, const StreamFactory& streams,
                                 std::size_t t) {
  config.validate();
  Rng rng = streams.stream("channel-dl", {t});
  return {draw_complex_gaussian(config.num_devices, config.subchannels_dl, config.sigma2_dl, rng), t};
}

ChannelRealization draw_uplink(const ChannelConfig& config, const StreamFactory& streams,
                               std::size_t t) {
  config.validate();
  Rng rng = streams.stream("channel-ul", {t});
  return {draw_complex_gaussian(config.num_devices, config.subchannels_ul, config.sigma2_ul, rng), t};
}

}  // namespace feel
