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
/// \brief Sweeps the compression ratio for one sampled device and prints the
/// accuracy / energy trade-off next to the solver's chosen operating point.

#include <cstdio>

#include "fedgreen/models.hpp"
#include "fedgreen/optimizer.hpp"
#include "fedgreen/sim.hpp"

using namespace fedgreen;

int main() {
  const Scenario scenario = sample_scenario(16, 2026);
  const SystemConfig& config = scenario.config;
  const AccuracyModel& acc = scenario.accuracy_model;
  const DeviceProfile& dev = scenario.devices.front();

  std::printf("device %d: f_max=%.2f GHz, p=%.2f W, rate=%.2f Mbit/s\n", dev.device_id,
              dev.max_freq_hz / 1e9, dev.tx_power_w,
              uplink_rate(dev, config.noise_psd_w_hz) / 1e6);
  std::printf("%8s %10s %12s %12s %14s\n", "alpha", "F(alpha)", "comm [J]", "comp [J]",
              "goal share");

  for (double alpha : {1.0, 2.0, 4.0, 8.0, 16.0, 64.0, 256.0, 1000.0}) {
    const double f_hz =
        std::min(dev.max_freq_hz,
                 config.local_epochs * static_cast<double>(dev.data_count) *
                     config.cycles_per_sample /
                     (0.5 * config.deadline_s));
    const CostBreakdown cost = round_cost(dev, config, alpha, f_hz);
    const double share = device_objective_share(acc, dev, config, alpha, f_hz);
    std::printf("%8.1f %10.5f %12.5f %12.5f %14.6f\n", alpha,
                accuracy(acc, alpha), cost.comm_energy_j, cost.comp_energy_j,
                share);
  }

  const CompressionPlan plan = solve_device(dev, config, acc);
  std::printf("solver: alpha=%.3f beta=%.5f f=%.3f GHz share=%.6f (%s)\n", plan.alpha, plan.beta,
              plan.f_hz / 1e9, plan.objective_share, plan_boundary_name(plan.boundary));
  return 0;
}
