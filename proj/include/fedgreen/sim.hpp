// Copyright 2026 The FedGreen Authors
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

/// \file
/// \brief Modeled federated-learning simulator: scenario sampling, per-round
/// cost ledgers for the FedGreen plan and the reference strategies, and the
/// energy-to-target query.
///
/// A Scenario is a frozen device population plus system constants and a seed.
/// run_modeled() prices every round analytically (no gradients move); the toy
/// end-to-end trainer lives in toy.hpp and reuses the plan machinery here.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "fedgreen/errors.hpp"
#include "fedgreen/models.hpp"
#include "fedgreen/optimizer.hpp"
#include "fedgreen/prng.hpp"

namespace fedgreen {

enum class ChannelMode {
  static_channels = 0,   // gains drawn once at sampling time
  per_round_redraw = 1,  // i.i.d. block fading: gains redrawn every round
};

inline std::string_view channel_mode_name(ChannelMode mode) {
  return mode == ChannelMode::static_channels ? "static" : "per_round_redraw";
}

inline ChannelMode channel_mode_from_name(std::string_view name) {
  if (name == "static") return ChannelMode::static_channels;
  if (name == "per_round_redraw") return ChannelMode::per_round_redraw;
  throw ConfigError("channel_mode", "must be \"static\" or \"per_round_redraw\"");
}

enum class Strategy {
  fedgreen = 0,
  random = 1,
  uniform = 2,
  selection = 3,
  uncompressed = 4,  // toy training only: dense uploads, no codec
};

inline std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::fedgreen: return "fedgreen";
    case Strategy::random: return "random";
    case Strategy::uniform: return "uniform";
    case Strategy::selection: return "selection";
    case Strategy::uncompressed: return "uncompressed";
  }
  throw DomainError("unknown strategy value");
}

inline Strategy strategy_from_name(std::string_view name) {
  if (name == "fedgreen") return Strategy::fedgreen;
  if (name == "random") return Strategy::random;
  if (name == "uniform") return Strategy::uniform;
  if (name == "selection") return Strategy::selection;
  if (name == "uncompressed") return Strategy::uncompressed;
  throw ConfigError("strategy",
                    "must be one of fedgreen, random, uniform, selection, uncompressed");
}

/// Distribution bounds used by sample_scenario() and by per-round channel
/// redraws.  Device hardware follows the experimental ranges; transmit power
/// and the rate-targeted channel draw are artifact defaults and can be
/// overridden through configuration.
struct SamplingOptions {
  double energy_coeff_min = 5e-27;  // effective switched capacitance
  double energy_coeff_max = 1e-26;
  double max_freq_min_hz = 1.5e9;
  double max_freq_max_hz = 4e9;
  double bandwidth_min_hz = 0.8e6;
  double bandwidth_max_hz = 5e6;
  double tx_power_min_w = 0.1;
  double tx_power_max_w = 1.0;
  double target_rate_min_bps = 1e6;   // channel gain is solved so the uplink
  double target_rate_max_bps = 20e6;  // rate lands uniformly in this window
  bool iid = true;                    // equal shards; false -> Dirichlet split
  double dirichlet_alpha = 0.5;
};

inline void validate_sampling_options(const SamplingOptions& s) {
  auto range = [](const char* key, double lo, double hi) {
    if (!(lo > 0.0) || !(hi > 0.0) || !(lo <= hi))
      throw ConfigError(key, "bounds must be positive with min <= max");
  };
  range("sample.energy_coeff", s.energy_coeff_min, s.energy_coeff_max);
  range("sample.fmax", s.max_freq_min_hz, s.max_freq_max_hz);
  range("sample.bandwidth", s.bandwidth_min_hz, s.bandwidth_max_hz);
  range("sample.tx_power", s.tx_power_min_w, s.tx_power_max_w);
  range("sample.rate", s.target_rate_min_bps, s.target_rate_max_bps);
  if (!(s.dirichlet_alpha > 0.0))
    throw ConfigError("sample.dirichlet_alpha", "must be positive");
}

/// A frozen simulation instance.  `sampling` records the distributions the
/// population was drawn from; per_round_redraw mode re-samples channel gains
/// from the same window each round.
struct Scenario {
  std::vector<DeviceProfile> devices;
  SystemConfig config;
  AccuracyModel accuracy_model;
  std::uint64_t seed = 0;
  ChannelMode channel_mode = ChannelMode::static_channels;
  SamplingOptions sampling;
};

inline void validate_scenario(const Scenario& sc) {
  if (sc.devices.empty()) throw ConfigError("devices", "scenario needs at least one device");
  validate_system_config(sc.config);
  validate_accuracy_model(sc.accuracy_model);
  validate_sampling_options(sc.sampling);
  std::unordered_set<int> ids;
  std::int64_t data_sum = 0;
  for (const DeviceProfile& d : sc.devices) {
    validate_device_profile(d);
    if (!ids.insert(d.device_id).second)
      throw ConfigError("devices", "duplicate device_id " + std::to_string(d.device_id));
    data_sum += d.data_count;
  }
  if (data_sum != sc.config.total_data)
    throw ConfigError("total_data",
                      "device data counts sum to " + std::to_string(data_sum) +
                          " but total_data is " + std::to_string(sc.config.total_data));
}

namespace detail {

// Stream tags keep every consumer of the master seed on a disjoint PRNG
// stream; round-indexed draws fold the round into the low word.
inline constexpr std::uint64_t kStreamProfile = 0x70726f66;    // "prof"
inline constexpr std::uint64_t kStreamDataSplit = 0x64617461;  // "data"
inline constexpr std::uint64_t kStreamChannelBase = 0x6368616e00000000ull;  // "chan"
inline constexpr std::uint64_t kStreamRandomBase = 0x616c706861ull << 20;   // "alpha"

// Channel gain such that uplink_rate() returns exactly target_rate_bps for
// this device's bandwidth and power (the Shannon map is inverted).
inline double gain_for_rate(double target_rate_bps, double bandwidth_hz, double tx_power_w,
                            double noise_psd_w_hz) {
  const double snr = std::exp2(target_rate_bps / bandwidth_hz) - 1.0;
  return std::sqrt(snr * noise_psd_w_hz * bandwidth_hz / tx_power_w);
}

inline double draw_channel_gain(Rng& rng, const DeviceProfile& d, const SamplingOptions& opt,
                                double noise_psd_w_hz) {
  const double rate = rng.uniform(opt.target_rate_min_bps, opt.target_rate_max_bps);
  return gain_for_rate(rate, d.bandwidth_hz, d.tx_power_w, noise_psd_w_hz);
}

// Largest-remainder apportionment of `total` samples over `weights`; every
// device keeps at least one sample.
inline std::vector<std::int64_t> apportion(const std::vector<double>& weights,
                                           std::int64_t total) {
  const std::size_t n = weights.size();
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  std::vector<std::int64_t> counts(n, 0);
  std::vector<std::pair<double, std::size_t>> fracs(n);
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double share = static_cast<double>(total) * weights[i] / wsum;
    counts[i] = static_cast<std::int64_t>(std::floor(share));
    fracs[i] = {share - static_cast<double>(counts[i]), i};
    assigned += counts[i];
  }
  std::sort(fracs.begin(), fracs.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  // Floors under-assign by fewer than n samples; top up by largest fraction.
  for (std::int64_t k = 0; k < total - assigned; ++k)
    counts[fracs[static_cast<std::size_t>(k)].second] += 1;
  // No empty shards: move one sample from the largest holder as needed.
  for (std::size_t i = 0; i < n; ++i) {
    if (counts[i] > 0) continue;
    std::size_t donor = 0;
    for (std::size_t j = 1; j < n; ++j)
      if (counts[j] > counts[donor]) donor = j;
    if (counts[donor] <= 1) throw ConfigError("total_data", "not enough samples to cover devices");
    counts[donor] -= 1;
    counts[i] = 1;
  }
  return counts;
}

}  // namespace detail

/// Draws a reproducible device population.  Per-device hardware uses stream
/// (seed, device_id, "prof"); the data split uses stream (seed, 0, "data").
/// Draw order per device: energy coefficient, max frequency, bandwidth,
/// transmit power, target rate.
inline Scenario sample_scenario(int device_count, std::uint64_t seed,
                                const SamplingOptions& options = {},
                                const SystemConfig& base_config = {},
                                const AccuracyModel& accuracy = {}) {
  if (device_count < 1) throw ConfigError("device_count", "must be at least 1");
  validate_sampling_options(options);
  validate_system_config(base_config);
  validate_accuracy_model(accuracy);
  if (base_config.total_data < device_count)
    throw ConfigError("total_data", "fewer samples than devices");

  Scenario sc;
  sc.config = base_config;
  sc.accuracy_model = accuracy;
  sc.seed = seed;
  sc.sampling = options;
  sc.devices.resize(static_cast<std::size_t>(device_count));

  std::vector<std::int64_t> counts;
  if (options.iid) {
    const std::int64_t base = base_config.total_data / device_count;
    const std::int64_t rem = base_config.total_data % device_count;
    counts.assign(static_cast<std::size_t>(device_count), base);
    for (std::int64_t i = 0; i < rem; ++i) counts[static_cast<std::size_t>(i)] += 1;
  } else {
    Rng split_rng(derive_stream(seed, 0, detail::kStreamDataSplit));
    std::vector<double> weights(static_cast<std::size_t>(device_count));
    for (double& w : weights) w = split_rng.gamma(options.dirichlet_alpha);
    counts = detail::apportion(weights, base_config.total_data);
  }

  for (int i = 0; i < device_count; ++i) {
    DeviceProfile& d = sc.devices[static_cast<std::size_t>(i)];
    d.device_id = i;
    Rng rng(derive_stream(seed, static_cast<std::uint64_t>(i), detail::kStreamProfile));
    d.energy_coeff = rng.uniform(options.energy_coeff_min, options.energy_coeff_max);
    d.max_freq_hz = rng.uniform(options.max_freq_min_hz, options.max_freq_max_hz);
    d.bandwidth_hz = rng.uniform(options.bandwidth_min_hz, options.bandwidth_max_hz);
    d.tx_power_w = rng.uniform(options.tx_power_min_w, options.tx_power_max_w);
    d.channel_gain = detail::draw_channel_gain(rng, d, options, base_config.noise_psd_w_hz);
    d.data_count = counts[static_cast<std::size_t>(i)];
  }
  validate_scenario(sc);
  return sc;
}

/// Replaces every channel gain with a fresh draw for `round` (block fading).
/// Stream (seed, device_id, "chan"|round) so histories are device-stable.
inline std::vector<DeviceProfile> redraw_channels(const Scenario& sc, int round) {
  std::vector<DeviceProfile> devices = sc.devices;
  for (DeviceProfile& d : devices) {
    Rng rng(derive_stream(sc.seed, static_cast<std::uint64_t>(d.device_id),
                          detail::kStreamChannelBase | static_cast<std::uint32_t>(round)));
    d.channel_gain = detail::draw_channel_gain(rng, d, sc.sampling, sc.config.noise_psd_w_hz);
  }
  return devices;
}

struct DeviceRoundRecord {
  int device_id = 0;
  double alpha = 0.0;  // 0 marks a round this device sat out
  double f_hz = 0.0;
  double comm_energy_j = 0.0;
  double comp_energy_j = 0.0;
  double latency_s = 0.0;
  bool feasible = false;
};

struct RoundLedger {
  int round_index = 0;
  std::vector<DeviceRoundRecord> devices;
  double total_energy_j = 0.0;
  double contribution = 0.0;  // data-weighted accuracy over participants
  double goal = 0.0;          // contribution minus weighted round energy
  double cumulative_energy_j = 0.0;
};

namespace detail {

// The modeled runs solve tighter than the SolverSettings default so that a
// baseline plan sitting near an interior optimum can never beat the solved
// plan through leftover bisection slack; the assertion that fedgreen tops
// every per-scenario comparison relies on this.
inline constexpr SolverSettings kModeledSolver{1e-12, 200};

inline std::vector<CompressionPlan> plans_for_round(const std::vector<DeviceProfile>& devices,
                                                    const SystemConfig& config,
                                                    const AccuracyModel& model,
                                                    Strategy strategy, std::uint64_t seed,
                                                    int round, ChannelMode mode) {
  switch (strategy) {
    case Strategy::fedgreen:
      return strategy_fedgreen(devices, config, model, kModeledSolver);
    case Strategy::random: {
      // Static channels keep one draw for the whole run so that the plan,
      // and therefore per-round cost, is round-invariant.
      const std::uint64_t draw_index =
          mode == ChannelMode::per_round_redraw ? static_cast<std::uint64_t>(round) : 0;
      return strategy_random(devices, config, model,
                             derive_stream(seed, draw_index, kStreamRandomBase));
    }
    case Strategy::uniform:
      return strategy_uniform(devices, config, model,
                              strategy_fedgreen(devices, config, model, kModeledSolver));
    case Strategy::selection:
      return strategy_selection(
          devices, config,
          strategy_uniform(devices, config, model,
                           strategy_fedgreen(devices, config, model, kModeledSolver)));
    case Strategy::uncompressed:
      throw DomainError("uncompressed strategy applies to toy training only");
  }
  throw DomainError("unknown strategy value");
}

}  // namespace detail

/// Prices `rounds` federated rounds without moving gradients.  Every device
/// with a plan (alpha >= 1) participates; contribution keeps the full-data
/// normalization even when a strategy drops devices.  Throws SimError when a
/// round has no participant at all.
inline std::vector<RoundLedger> run_modeled(const Scenario& scenario, Strategy strategy,
                                            int rounds) {
  validate_scenario(scenario);
  if (rounds < 1) throw DomainError("rounds must be at least 1");
  if (strategy == Strategy::uncompressed)
    throw DomainError("uncompressed strategy applies to toy training only");

  std::vector<RoundLedger> ledgers;
  ledgers.reserve(static_cast<std::size_t>(rounds));
  double cumulative = 0.0;

  for (int round = 0; round < rounds; ++round) {
    const std::vector<DeviceProfile> devices =
        scenario.channel_mode == ChannelMode::per_round_redraw ? redraw_channels(scenario, round)
                                                               : scenario.devices;
    const std::vector<CompressionPlan> plans = detail::plans_for_round(
        devices, scenario.config, scenario.accuracy_model, strategy, scenario.seed, round,
        scenario.channel_mode);

    RoundLedger ledger;
    ledger.round_index = round;
    ledger.devices.resize(devices.size());

    std::vector<double> alphas;
    std::vector<std::int64_t> data_counts;
    int participants = 0;
    double goal_sum = 0.0;

    for (std::size_t i = 0; i < devices.size(); ++i) {
      const DeviceProfile& dev = devices[i];
      DeviceRoundRecord& rec = ledger.devices[i];
      rec.device_id = dev.device_id;

      const CompressionPlan* plan = nullptr;
      for (const CompressionPlan& p : plans) {
        if (p.device_id == dev.device_id) {
          plan = &p;
          break;
        }
      }
      if (plan == nullptr || !(plan->alpha >= 1.0)) continue;  // sat out this round

      const CostBreakdown cost = round_cost(dev, scenario.config, plan->alpha, plan->f_hz);
      rec.alpha = plan->alpha;
      rec.f_hz = plan->f_hz;
      rec.comm_energy_j = cost.comm_energy_j;
      rec.comp_energy_j = cost.comp_energy_j;
      rec.latency_s = cost.latency_s();
      rec.feasible = plan->feasible;

      ledger.total_energy_j += cost.total_energy_j();
      goal_sum += plan->objective_share;
      alphas.push_back(plan->alpha);
      data_counts.push_back(dev.data_count);
      participants += 1;
    }

    if (participants == 0) throw SimError("round " + std::to_string(round) + ": no participating device");

    ledger.contribution = contribution(scenario.accuracy_model, alphas, data_counts,
                                       scenario.config.total_data);
    ledger.goal = goal_sum;
    cumulative += ledger.total_energy_j;
    ledger.cumulative_energy_j = cumulative;
    ledgers.push_back(std::move(ledger));
  }
  return ledgers;
}

/// Cumulative energy at the first round whose contribution reaches `target`,
/// or nullopt when no round does.
inline std::optional<double> energy_to_target(const std::vector<RoundLedger>& ledgers,
                                              double target) {
  for (const RoundLedger& ledger : ledgers)
    if (ledger.contribution >= target) return ledger.cumulative_energy_j;
  return std::nullopt;
}

}  // namespace fedgreen
