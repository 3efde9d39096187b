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

#include "feel/capacity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace feel {

namespace {

constexpr int kMaxBisectionSteps = 200;
constexpr double kResidualTolerance = 1e-12;

void require_positive(double value, const char* what) {
  if (!(value > 0.0) || !std::isfinite(value))
    throw InvalidArgument(std::string("capacity: ") + what + " must be positive and finite");
}

// Strongest device per sub-channel; ties go to the lowest index.
std::vector<Index> strongest_devices(const Matrix<double>& power_gains) {
  std::vector<Index> winner(static_cast<std::size_t>(power_gains.cols()), 0);
  for (Index i = 0; i < power_gains.cols(); ++i) {
    Index best = 0;
    for (Index k = 1; k < power_gains.rows(); ++k) {
      if (power_gains(k, i) > power_gains(best, i)) best = k;
    }
    winner[static_cast<std::size_t>(i)] = best;
  }
  return winner;
}

AllocationResult waterfill_best_device(const Matrix<double>& power_gains, double budget) {
  if (power_gains.rows() < 1 || power_gains.cols() < 1)
    throw InvalidArgument("capacity: need at least one device and one sub-channel");
  if (!power_gains.allFinite() || (power_gains.array() < 0.0).any())
    throw InvalidArgument("capacity: gains must be finite and nonnegative");

  AllocationResult out;
  out.winner = strongest_devices(power_gains);
  const Index s = power_gains.cols();
  std::vector<double> best(static_cast<std::size_t>(s));
  for (Index i = 0; i < s; ++i) best[static_cast<std::size_t>(i)] = power_gains(out.winner[i], i);

  out.water_level = solve_water_level(best, budget);
  out.subchannel_power.setZero(s);
  out.subchannel_rate.setZero(s);
  out.device_capacity.setZero(power_gains.rows());
  for (Index i = 0; i < s; ++i) {
    const double g = best[static_cast<std::size_t>(i)];
    if (g <= out.water_level) continue;
    out.subchannel_power[i] = 1.0 / out.water_level - 1.0 / g;
    out.subchannel_rate[i] = std::log2(g / out.water_level);
  }
  // Fixed ascending reduction order.
  for (Index i = 0; i < s; ++i) {
    out.device_capacity[out.winner[static_cast<std::size_t>(i)]] += out.subchannel_rate[i];
    out.sum_capacity += out.subchannel_rate[i];
  }
  return out;
}

}  // namespace

Matrix<double> AllocationResult::power_by_device(Index devices) const {
  Matrix<double> p = Matrix<double>::Zero(devices, subchannel_power.size());
  for (Index i = 0; i < subchannel_power.size(); ++i) p(winner[static_cast<std::size_t>(i)], i) = subchannel_power[i];
  return p;
}

double water_filled_power(std::span<const double> gains, double lambda) {
  double total = 0.0;
  for (double g : gains) {
    if (g > lambda) total += 1.0 / lambda - 1.0 / g;
  }
  return total;
}

double solve_water_level(std::span<const double> gains, double budget) {
  require_positive(budget, "power budget");
  double g_max = 0.0;
  double inverse_sum = 0.0;
  std::size_t positive = 0;
  for (double g : gains) {
    if (!(g >= 0.0) || !std::isfinite(g)) throw InvalidArgument("capacity: gains must be finite and nonnegative");
    if (g > 0.0) {
      g_max = std::max(g_max, g);
      inverse_sum += 1.0 / g;
      ++positive;
    }
  }
  if (positive == 0) throw InvalidArgument("capacity: degenerate channel (all gains zero)");

  // At lambda = n / (budget + sum 1/g) every channel would be active and the
  // unclipped sum equals the budget, so the clipped sum is >= budget there.
  double lo = static_cast<double>(positive) / (budget + inverse_sum);
  double hi = g_max;
  double lambda = lo;
  for (int step = 0; step < kMaxBisectionSteps; ++step) {
    lambda = 0.5 * (lo + hi);
    const double residual = water_filled_power(gains, lambda) - budget;
    if (std::abs(residual) < kResidualTolerance * budget) break;
    if (residual > 0.0) lo = lambda; else hi = lambda;
    if (!(hi > lo)) break;
  }

  // Closed form on the active set found by bisection removes the last bits of
  // residual without changing which channels are active.
  std::size_t active = 0;
  double active_inverse = 0.0;
  for (double g : gains) {
    if (g > lambda) {
      ++active;
      active_inverse += 1.0 / g;
    }
  }
  if (active > 0) {
    const double exact = static_cast<double>(active) / (budget + active_inverse);
    std::size_t active_exact = 0;
    for (double g : gains) active_exact += g > exact ? 1 : 0;
    if (active_exact == active &&
        std::abs(water_filled_power(gains, exact) - budget) <= std::abs(water_filled_power(gains, lambda) - budget)) {
      lambda = exact;
    }
  }
  return lambda;
}

BCBoundaryPoint bc_boundary_from_power_gains(const Vector<double>& power_gains, double power,
                                             const Vector<double>& alpha) {
  require_positive(power, "power");
  const Index k = power_gains.size();
  if (alpha.size() != k) throw InvalidArgument("bc_boundary: alpha length must match gains");
  if ((alpha.array() < 0.0).any()) throw InvalidArgument("bc_boundary: alpha entries must be nonnegative");
  if (std::abs(alpha.sum() - 1.0) > 1e-12) throw InvalidArgument("bc_boundary: alpha must sum to 1");

  // Ascending |h|; stable so equal gains keep input order.
  std::vector<Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return power_gains[a] < power_gains[b]; });

  BCBoundaryPoint out{alpha, Vector<double>::Zero(k)};
  double interference = 0.0;  // sum over stronger users of alpha_j |h_j|^2 P
  for (Index pos = k - 1; pos >= 0; --pos) {
    const Index dev = order[static_cast<std::size_t>(pos)];
    const double signal = alpha[dev] * power_gains[dev] * power;
    out.rates[dev] = std::log2(1.0 + signal / (1.0 + interference));
    interference += signal;
  }
  return out;
}

AllocationResult bc_waterfill(const Matrix<double>& power_gains, double total_power) {
  require_positive(total_power, "total power");
  return waterfill_best_device(power_gains, total_power);
}

AllocationResult bc_waterfill(const ChannelRealization& realization, double total_power) {
  return bc_waterfill(realization.power_gains(), total_power);
}

AllocationResult mac_waterfill(const Matrix<double>& power_gains, double per_device_power) {
  require_positive(per_device_power, "per-device power");
  const Index k = power_gains.rows();
  AllocationResult out = waterfill_best_device(power_gains, static_cast<double>(k) * per_device_power);
  out.device_capacity.setConstant(k, out.sum_capacity / static_cast<double>(k));
  return out;
}

AllocationResult mac_waterfill(const ChannelRealization& realization, double per_device_power) {
  return mac_waterfill(realization.power_gains(), per_device_power);
}

namespace {

void require_oracle_size(Index k) {
  if (k > kRegionOracleMaxDevices) throw InvalidArgument("mac_region_contains: oracle limited to small K");
}

}  // namespace

bool mac_region_contains_from_power_gains(const Vector<double>& power_gains,
                                          const Vector<double>& powers,
                                          const Vector<double>& rates, double tolerance) {
  const Index k = power_gains.size();
  if (powers.size() != k || rates.size() != k)
    throw InvalidArgument("mac_region_contains: lengths must agree");
  Matrix<double> g = power_gains;
  Matrix<double> p = powers;
  return mac_region_contains_parallel(g, p, rates, tolerance);
}

bool mac_region_contains_parallel(const Matrix<double>& power_gains, const Matrix<double>& powers,
                                  const Vector<double>& rates, double tolerance) {
  const Index k = power_gains.rows();
  require_oracle_size(k);
  if (powers.rows() != k || powers.cols() != power_gains.cols() || rates.size() != k)
    throw InvalidArgument("mac_region_contains: lengths must agree");

  const Matrix<double> snr = power_gains.cwiseProduct(powers);
  const std::uint32_t subsets = 1u << static_cast<unsigned>(k);
  for (std::uint32_t mask = 1; mask < subsets; ++mask) {
    double rate_sum = 0.0;
    Vector<double> received = Vector<double>::Zero(power_gains.cols());
    for (Index j = 0; j < k; ++j) {
      if (mask & (1u << static_cast<unsigned>(j))) {
        rate_sum += rates[j];
        received += snr.row(j).transpose();
      }
    }
    double bound = 0.0;
    for (Index i = 0; i < received.size(); ++i) bound += std::log2(1.0 + received[i]);
    if (rate_sum > bound + tolerance) return false;
  }
  return true;
}

}  // namespace feel
