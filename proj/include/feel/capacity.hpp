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

#include <span>
#include <vector>

#include "feel/channel.hpp"
#include "feel/types.hpp"

namespace feel {

/// Sum-capacity-optimal allocation over parallel sub-channels: each sub-channel
/// is handed to its strongest device and power is water-filled across them.
struct AllocationResult {
  double water_level = 0.0;            // lambda
  Vector<double> subchannel_power;     // P_i, length s
  Vector<double> subchannel_rate;      // winner's rate on i, bits
  Vector<double> device_capacity;      // bits per round, length K
  std::vector<Index> winner;           // strongest device per sub-channel
  double sum_capacity = 0.0;

  /// K x s matrix holding P_i in (winner[i], i) and zero elsewhere.
  Matrix<double> power_by_device(Index devices) const;
};

struct BCBoundaryPoint {
  Vector<double> alpha;
  Vector<double> rates;  // bits, in input device order
};

/// Solves sum_i (1/lambda - 1/g_i)^+ = budget for lambda by bisection.
/// Zero gains never receive power. Throws on an all-zero gain vector.
double solve_water_level(std::span<const double> gains, double budget);

/// Total water-filled power at level `lambda`.
double water_filled_power(std::span<const double> gains, double lambda);

/// Superposition-coding boundary point of a single degraded broadcast
/// sub-channel for the weight vector `alpha` (weak users decoded last).
BCBoundaryPoint bc_boundary_from_power_gains(const Vector<double>& power_gains, double power,
                                             const Vector<double>& alpha);

template <typename Derived>
BCBoundaryPoint bc_boundary(const Eigen::MatrixBase<Derived>& gains, double power,
                            const Vector<double>& alpha) {
  return bc_boundary_from_power_gains(gains.cwiseAbs2().template cast<double>(), power, alpha);
}

/// Downlink: K x s power gains (|h|^2), shared power budget.
AllocationResult bc_waterfill(const Matrix<double>& power_gains, double total_power);
AllocationResult bc_waterfill(const ChannelRealization& realization, double total_power);

/// Uplink: budget K * per_device_power, sum capacity split evenly over K.
AllocationResult mac_waterfill(const Matrix<double>& power_gains, double per_device_power);
AllocationResult mac_waterfill(const ChannelRealization& realization, double per_device_power);

inline constexpr Index kRegionOracleMaxDevices = 16;

/// Exhaustive check of every nonempty subset S of a single-sub-channel MAC:
/// sum_{k in S} r_k <= log2(1 + sum_{k in S} g_k P_k) + tolerance.
bool mac_region_contains_from_power_gains(const Vector<double>& power_gains,
                                          const Vector<double>& powers,
                                          const Vector<double>& rates, double tolerance = 1e-9);

template <typename Derived>
bool mac_region_contains(const Eigen::MatrixBase<Derived>& gains, const Vector<double>& powers,
                         const Vector<double>& rates, double tolerance = 1e-9) {
  return mac_region_contains_from_power_gains(gains.cwiseAbs2().template cast<double>(), powers,
                                              rates, tolerance);
}

/// Parallel-MAC version for a fixed K x s power allocation: the rank of S is
/// the sum over sub-channels of log2(1 + sum_{k in S} g_{k,i} P_{k,i}).
bool mac_region_contains_parallel(const Matrix<double>& power_gains, const Matrix<double>& powers,
                                  const Vector<double>& rates, double tolerance = 1e-9);

}  // namespace feel
