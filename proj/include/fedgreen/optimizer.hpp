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

/// \file optimizer.hpp
/// \brief Per-device joint (alpha, f) solver and the baseline strategies.
///
/// The device problem is reduced to one variable by the deadline split
/// beta: communication gets beta*T seconds (so alpha = S/(beta*r*T)) and
/// computing gets (1-beta)*T (so f = nDW/((1-beta)*T), capped at f_max).
/// The per-device objective share is concave in beta on the un-clamped
/// accuracy domain, so a bisection on the derivative's sign change finds
/// the interior optimum; the clamped-accuracy sub-interval is flat in the
/// accuracy term and strictly energy-decreasing, so its best point is its
/// lower edge, which the solver compares against explicitly.

#ifndef FEDGREEN_OPTIMIZER_HPP_
#define FEDGREEN_OPTIMIZER_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "fedgreen/errors.hpp"
#include "fedgreen/models.hpp"
#include "fedgreen/prng.hpp"

namespace fedgreen {

/// Keeps beta strictly below 1 so the computing phase never degenerates.
inline constexpr double kBetaEpsilon = 1e-9;

enum class PlanBoundary {
  interior,    // first-order optimum inside the feasible beta interval
  beta_min,    // lower beta edge binds (maximal compression)
  alpha_floor, // upper beta edge binds (alpha >= 1, computing, or beta cap)
  infeasible,  // no beta satisfies the deadline at any frequency
};

inline const char* plan_boundary_name(PlanBoundary b) {
  switch (b) {
    case PlanBoundary::interior: return "interior";
    case PlanBoundary::beta_min: return "beta_min";
    case PlanBoundary::alpha_floor: return "alpha_floor";
    case PlanBoundary::infeasible: return "infeasible";
  }
  return "unknown";
}

struct CompressionPlan {
  int device_id = 0;
  double alpha = 0.0;            // compression ratio; 0 marks an unusable plan
  double f_hz = 0.0;             // computing frequency
  double beta = 0.0;             // deadline fraction spent communicating
  double objective_share = 0.0;  // this device's additive term of the goal
  bool feasible = false;
  PlanBoundary boundary = PlanBoundary::infeasible;
};

struct SolverSettings {
  double tolerance = 1e-8;  // bisection width on beta
  int max_iterations = 200;
};

inline void validate_solver_settings(const SolverSettings& s) {
  if (!(s.tolerance > 0.0)) throw DomainError("tolerance must be positive");
  if (s.max_iterations <= 0)
    throw DomainError("max_iterations must be positive");
}

/// Minimal frequency meeting the deadline after communication, capped at the
/// hardware ceiling. The cap can leave the deadline violated; callers detect
/// that through the plan's feasible flag.
inline double optimal_frequency(const DeviceProfile& d, const SystemConfig& c,
                                double alpha) {
  validate_system_config(c);
  if (!(alpha >= 1.0))
    throw DomainError("compression ratio must be >= 1, got " +
                      std::to_string(alpha));
  const double rate = uplink_rate(d, c.noise_psd_w_hz);
  const double comm_s = c.gradient_bits / (alpha * rate);
  if (!(c.deadline_s > comm_s))
    throw InfeasibleError("device " + std::to_string(d.device_id) +
                          ": no computing time remains within the deadline");
  const double cycles = static_cast<double>(c.local_epochs) *
                        static_cast<double>(d.data_count) *
                        c.cycles_per_sample;
  return std::min(cycles / (c.deadline_s - comm_s), d.max_freq_hz);
}

/// Feasible interval for the communication fraction beta.
///
/// beta_max combines three caps: alpha >= 1 forces beta <= S/(r*T); the
/// frequency ceiling forces (1-beta)*T >= nDW/f_max; and beta stays below
/// 1 - kBetaEpsilon. beta_min = S/(alpha_max*r*T) is the compression cap:
/// the accuracy curve is flat beyond its fitted domain, so alpha is capped
/// at config.alpha_max to keep the per-device optimum attained rather than
/// a supremum at beta -> 0.
struct BetaBounds {
  double beta_min = 0.0;
  double beta_max = 0.0;
};

inline BetaBounds beta_bounds(const DeviceProfile& d, const SystemConfig& c) {
  validate_system_config(c);
  const double rate = uplink_rate(d, c.noise_psd_w_hz);
  const double cycles = static_cast<double>(c.local_epochs) *
                        static_cast<double>(d.data_count) *
                        c.cycles_per_sample;
  BetaBounds out;
  out.beta_min = c.gradient_bits / (c.alpha_max * rate * c.deadline_s);
  out.beta_max = std::min({1.0 - kBetaEpsilon,
                           c.gradient_bits / (rate * c.deadline_s),
                           1.0 - cycles / (d.max_freq_hz * c.deadline_s)});
  if (!(out.beta_min < out.beta_max))
    throw InfeasibleError("device " + std::to_string(d.device_id) +
                          ": deadline unreachable at every beta");
  return out;
}

/// d(objective share)/d(beta) along the deadline-binding curve
/// alpha = S/(beta*r*T), f = nDW/((1-beta)*T).
///
/// The accuracy term is gated off wherever the accuracy model is flat:
/// log-argument below clamp_epsilon, or raw value outside [0, 1]. The
/// energy term is always active. Boundary gating is right-continuous.
inline double goal_derivative_beta(const DeviceProfile& d,
                                   const SystemConfig& c,
                                   const AccuracyModel& m, double beta) {
  if (!(beta > 0.0 && beta < 1.0))
    throw DomainError("beta must lie in (0, 1), got " + std::to_string(beta));
  const double rate = uplink_rate(d, c.noise_psd_w_hz);
  const double t = c.deadline_s;
  const double lambda = beta * rate * t / c.gradient_bits;  // 1/alpha
  const double argument = m.kappa2 * lambda - m.kappa3;
  const double cycles = static_cast<double>(c.local_epochs) *
                        static_cast<double>(d.data_count) *
                        c.cycles_per_sample;
  const double one_minus = 1.0 - beta;
  const double energy_slope =
      c.energy_weight * static_cast<double>(c.global_rounds) *
      (d.tx_power_w * t +
       2.0 * d.energy_coeff * cycles * cycles * cycles / (t * t * one_minus * one_minus * one_minus));
  bool active = argument >= m.clamp_epsilon;
  if (active) {
    const double raw = m.kappa1 * std::log2(argument) + m.kappa4;
    active = raw > 0.0 && raw < 1.0;
  }
  if (!active) return -energy_slope;
  const double accuracy_slope =
      (rate * t / c.gradient_bits) * static_cast<double>(d.data_count) *
      m.kappa1 * m.kappa2 /
      (static_cast<double>(c.total_data) * argument * std::numbers::ln2);
  return accuracy_slope - energy_slope;
}

/// Fully materialized plan at a given communication fraction. Shared by the
/// solver, the baseline strategies, and grid oracles so that objective
/// comparisons are bitwise consistent.
inline CompressionPlan plan_at_beta(const DeviceProfile& d,
                                    const SystemConfig& c,
                                    const AccuracyModel& m, double beta) {
  if (!(beta > 0.0 && beta < 1.0))
    throw DomainError("beta must lie in (0, 1), got " + std::to_string(beta));
  CompressionPlan plan;
  plan.device_id = d.device_id;
  plan.beta = beta;
  const double rate = uplink_rate(d, c.noise_psd_w_hz);
  plan.alpha = std::clamp(c.gradient_bits / (beta * rate * c.deadline_s), 1.0,
                          c.alpha_max);
  plan.f_hz = optimal_frequency(d, c, plan.alpha);
  plan.objective_share = device_objective_share(m, d, c, plan.alpha, plan.f_hz);
  const double comm_s = c.gradient_bits / (plan.alpha * rate);
  const double cycles = static_cast<double>(c.local_epochs) *
                        static_cast<double>(d.data_count) *
                        c.cycles_per_sample;
  plan.feasible =
      comm_s + cycles / plan.f_hz <= c.deadline_s * (1.0 + 1e-9);
  plan.boundary = PlanBoundary::interior;
  return plan;
}

namespace detail {

/// Maps an accuracy-model log-argument value to the beta where the curve
/// crosses it: argument = kappa2*beta*r*T/S - kappa3.
inline double beta_at_argument(const SystemConfig& c, const AccuracyModel& m,
                               double rate, double argument) {
  return (argument + m.kappa3) * c.gradient_bits /
         (m.kappa2 * rate * c.deadline_s);
}

}  // namespace detail

/// Solves the per-device problem: maximize the objective share over beta in
/// [beta_min, beta_max], then recover (alpha, f). Depends only on this
/// device's profile plus the shared config, so per-device solves are
/// independent.
inline CompressionPlan solve_device(const DeviceProfile& d,
                                    const SystemConfig& c,
                                    const AccuracyModel& m,
                                    const SolverSettings& settings = {}) {
  validate_device_profile(d);
  validate_system_config(c);
  validate_accuracy_model(m);
  validate_solver_settings(settings);

  BetaBounds bounds;
  try {
    bounds = beta_bounds(d, c);
  } catch (const InfeasibleError&) {
    CompressionPlan plan;
    plan.device_id = d.device_id;
    plan.feasible = false;
    plan.boundary = PlanBoundary::infeasible;
    return plan;
  }

  const double rate = uplink_rate(d, c.noise_psd_w_hz);
  // Sub-interval where the accuracy term actually varies: the log argument
  // must clear the clamp floor and the raw curve must sit strictly inside
  // (0, 1). Outside it the objective strictly decreases in beta, so the
  // only extra candidate below is beta_min itself. The derivative jumps at
  // the exact crossings and reconstructing the argument from beta can round
  // a hair past the gate, so nudge both edges strictly inside.
  const double beta_flat_floor =
      detail::beta_at_argument(
          c, m, rate,
          std::max(m.clamp_epsilon, std::exp2(-m.kappa4 / m.kappa1))) *
      (1.0 + 1e-9);
  const double beta_range_top =
      detail::beta_at_argument(c, m, rate,
                               std::exp2((1.0 - m.kappa4) / m.kappa1)) *
      (1.0 - 1e-9);
  const double lo = std::max(bounds.beta_min, beta_flat_floor);
  const double hi = std::min(bounds.beta_max, beta_range_top);

  std::vector<double> candidates{bounds.beta_min};
  if (lo < hi) {
    double d_lo = goal_derivative_beta(d, c, m, lo);
    double d_hi = goal_derivative_beta(d, c, m, hi);
    if (d_lo > 0.0 && d_hi < 0.0) {
      double a = lo, b = hi;
      for (int it = 0; it < settings.max_iterations && b - a > settings.tolerance;
           ++it) {
        const double mid = 0.5 * (a + b);
        if (goal_derivative_beta(d, c, m, mid) > 0.0)
          a = mid;
        else
          b = mid;
      }
      candidates.push_back(0.5 * (a + b));
    } else if (d_hi >= 0.0) {
      candidates.push_back(hi);
    }
    // d_lo <= 0 with d_hi < 0: decreasing on the whole active part, so the
    // candidate set stays {beta_min}.
  }

  CompressionPlan best;
  bool have = false;
  for (double beta : candidates) {
    CompressionPlan plan = plan_at_beta(d, c, m, beta);
    if (!have || plan.objective_share > best.objective_share) {
      best = plan;
      have = true;
    }
  }
  if (best.beta == bounds.beta_min)
    best.boundary = PlanBoundary::beta_min;
  else if (best.beta == bounds.beta_max)
    best.boundary = PlanBoundary::alpha_floor;
  else
    best.boundary = PlanBoundary::interior;
  return best;
}

/// FedGreen: per-device optimum for every profile.
inline std::vector<CompressionPlan> strategy_fedgreen(
    const std::vector<DeviceProfile>& profiles, const SystemConfig& c,
    const AccuracyModel& m, const SolverSettings& settings = {}) {
  std::vector<CompressionPlan> plans;
  plans.reserve(profiles.size());
  for (const auto& d : profiles) plans.push_back(solve_device(d, c, m, settings));
  return plans;
}

namespace detail {

/// Builds a baseline plan from a fixed compression ratio: f per the minimal
/// deadline-meeting frequency, deadline violations flagged. When even
/// f_max cannot fit computing after communication (or communication alone
/// overruns), the device runs at f_max and the plan is flagged.
inline CompressionPlan plan_from_alpha(const DeviceProfile& d,
                                       const SystemConfig& c,
                                       const AccuracyModel& m, double alpha) {
  CompressionPlan plan;
  plan.device_id = d.device_id;
  plan.alpha = alpha;
  const double rate = uplink_rate(d, c.noise_psd_w_hz);
  const double comm_s = c.gradient_bits / (alpha * rate);
  plan.beta = comm_s / c.deadline_s;
  try {
    plan.f_hz = optimal_frequency(d, c, alpha);
  } catch (const InfeasibleError&) {
    plan.f_hz = d.max_freq_hz;
  }
  const double cycles = static_cast<double>(c.local_epochs) *
                        static_cast<double>(d.data_count) *
                        c.cycles_per_sample;
  plan.feasible = comm_s + cycles / plan.f_hz <= c.deadline_s * (1.0 + 1e-9);
  plan.boundary = PlanBoundary::interior;
  plan.objective_share = device_objective_share(m, d, c, alpha, plan.f_hz);
  return plan;
}

}  // namespace detail

/// Random baseline: alpha_i ~ uniform[50, 300], frequency per the minimal
/// deadline-meeting rule. Draws are keyed by (seed, device_id) so plans do
/// not depend on profile order.
inline std::vector<CompressionPlan> strategy_random(
    const std::vector<DeviceProfile>& profiles, const SystemConfig& c,
    const AccuracyModel& m, std::uint64_t seed) {
  validate_system_config(c);
  std::vector<CompressionPlan> plans;
  plans.reserve(profiles.size());
  for (const auto& d : profiles) {
    Rng rng(derive_stream(seed, static_cast<std::uint64_t>(d.device_id),
                          0x72616e64));  // stream tag: random strategy
    plans.push_back(detail::plan_from_alpha(d, c, m, rng.uniform(50.0, 300.0)));
  }
  return plans;
}

/// Uniform baseline: every device uses the arithmetic mean of FedGreen's
/// feasible compression ratios.
inline std::vector<CompressionPlan> strategy_uniform(
    const std::vector<DeviceProfile>& profiles, const SystemConfig& c,
    const AccuracyModel& m, const std::vector<CompressionPlan>& fedgreen_plans) {
  validate_system_config(c);
  double sum = 0.0;
  int count = 0;
  for (const auto& plan : fedgreen_plans)
    if (plan.feasible && plan.alpha >= 1.0) {
      sum += plan.alpha;
      ++count;
    }
  if (count == 0)
    throw InfeasibleError("uniform strategy: no feasible reference plan");
  const double mean_alpha = sum / static_cast<double>(count);
  std::vector<CompressionPlan> plans;
  plans.reserve(profiles.size());
  for (const auto& d : profiles)
    plans.push_back(detail::plan_from_alpha(d, c, m, mean_alpha));
  return plans;
}

/// Selection baseline: drop the ceil(25%) most energy-hungry devices under
/// the uniform plan (ties broken by ascending device_id) and keep the
/// uniform plan for the rest. The goal's data denominator is unchanged;
/// exclusion only removes numerator terms.
inline std::vector<CompressionPlan> strategy_selection(
    const std::vector<DeviceProfile>& profiles, const SystemConfig& c,
    const std::vector<CompressionPlan>& uniform_plans) {
  validate_system_config(c);
  if (uniform_plans.size() != profiles.size())
    throw DomainError("selection strategy: plan/profile count mismatch");
  struct Ranked {
    double energy;
    int device_id;
    std::size_t index;
  };
  std::vector<Ranked> ranked;
  ranked.reserve(profiles.size());
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const auto& plan = uniform_plans[i];
    if (plan.device_id != profiles[i].device_id)
      throw DomainError("selection strategy: plan order must match profiles");
    const CostBreakdown cost =
        round_cost(profiles[i], c, plan.alpha, plan.f_hz);
    ranked.push_back({cost.total_energy_j(), profiles[i].device_id, i});
  }
  const std::size_t excluded = (profiles.size() + 3) / 4;  // ceil(25%)
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.energy != b.energy) return a.energy > b.energy;
    return a.device_id < b.device_id;
  });
  std::vector<bool> keep(profiles.size(), true);
  for (std::size_t i = 0; i < excluded && i < ranked.size(); ++i)
    keep[ranked[i].index] = false;
  std::vector<CompressionPlan> plans;
  for (std::size_t i = 0; i < uniform_plans.size(); ++i)
    if (keep[i]) plans.push_back(uniform_plans[i]);
  return plans;
}

}  // namespace fedgreen

#endif  // FEDGREEN_OPTIMIZER_HPP_
