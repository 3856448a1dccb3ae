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

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "fedgreen/sim.hpp"
#include "fedgreen/toy.hpp"

using namespace fedgreen;

// ---------------------------------------------------------------------------
// Scenario sampling
// ---------------------------------------------------------------------------

TEST_CASE("sample_scenario is deterministic in the seed", "[sim][sample]") {
  const Scenario a = sample_scenario(16, 42);
  const Scenario b = sample_scenario(16, 42);
  REQUIRE(a.devices.size() == 16);
  for (std::size_t i = 0; i < a.devices.size(); ++i) {
    REQUIRE(a.devices[i].device_id == b.devices[i].device_id);
    REQUIRE(a.devices[i].energy_coeff == b.devices[i].energy_coeff);
    REQUIRE(a.devices[i].max_freq_hz == b.devices[i].max_freq_hz);
    REQUIRE(a.devices[i].bandwidth_hz == b.devices[i].bandwidth_hz);
    REQUIRE(a.devices[i].tx_power_w == b.devices[i].tx_power_w);
    REQUIRE(a.devices[i].channel_gain == b.devices[i].channel_gain);
    REQUIRE(a.devices[i].data_count == b.devices[i].data_count);
  }
  const Scenario c = sample_scenario(16, 43);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.devices.size(); ++i)
    any_diff = any_diff || a.devices[i].channel_gain != c.devices[i].channel_gain;
  REQUIRE(any_diff);
}

TEST_CASE("sampled hardware lands inside the experimental windows",
          "[sim][sample]") {
  const Scenario sc = sample_scenario(16, 7);
  const SamplingOptions& opt = sc.sampling;
  for (const DeviceProfile& d : sc.devices) {
    REQUIRE(d.energy_coeff >= opt.energy_coeff_min);
    REQUIRE(d.energy_coeff <= opt.energy_coeff_max);
    REQUIRE(d.max_freq_hz >= opt.max_freq_min_hz);
    REQUIRE(d.max_freq_hz <= opt.max_freq_max_hz);
    REQUIRE(d.bandwidth_hz >= opt.bandwidth_min_hz);
    REQUIRE(d.bandwidth_hz <= opt.bandwidth_max_hz);
    REQUIRE(d.tx_power_w >= opt.tx_power_min_w);
    REQUIRE(d.tx_power_w <= opt.tx_power_max_w);
    // The channel draw targets the uplink rate window directly.
    const double rate = uplink_rate(d, sc.config.noise_psd_w_hz);
    REQUIRE(rate >= opt.target_rate_min_bps * (1.0 - 1e-9));
    REQUIRE(rate <= opt.target_rate_max_bps * (1.0 + 1e-9));
  }
}

TEST_CASE("iid split shards the corpus evenly", "[sim][sample]") {
  const Scenario sc = sample_scenario(16, 3);
  REQUIRE(sc.config.total_data == 48000);
  for (const DeviceProfile& d : sc.devices) REQUIRE(d.data_count == 3000);
}

TEST_CASE("dirichlet split covers every device and conserves the corpus",
          "[sim][sample]") {
  SamplingOptions opt;
  opt.iid = false;
  const Scenario sc = sample_scenario(16, 5, opt);
  std::int64_t sum = 0;
  bool uneven = false;
  for (const DeviceProfile& d : sc.devices) {
    REQUIRE(d.data_count >= 1);
    sum += d.data_count;
    uneven = uneven || d.data_count != 3000;
  }
  REQUIRE(sum == 48000);
  REQUIRE(uneven);

  const Scenario again = sample_scenario(16, 5, opt);
  for (std::size_t i = 0; i < sc.devices.size(); ++i)
    REQUIRE(sc.devices[i].data_count == again.devices[i].data_count);
}

TEST_CASE("scenario validation rejects malformed populations", "[sim][sample]") {
  Scenario sc = sample_scenario(2, 1);
  Scenario dup = sc;
  dup.devices[1].device_id = dup.devices[0].device_id;
  REQUIRE_THROWS_AS(validate_scenario(dup), ConfigError);

  Scenario off = sc;
  off.config.total_data += 1;
  REQUIRE_THROWS_AS(validate_scenario(off), ConfigError);

  Scenario empty = sc;
  empty.devices.clear();
  REQUIRE_THROWS_AS(validate_scenario(empty), ConfigError);

  REQUIRE_THROWS_AS(sample_scenario(0, 1), ConfigError);
  SamplingOptions bad;
  bad.bandwidth_min_hz = -1.0;
  REQUIRE_THROWS_AS(sample_scenario(4, 1, bad), ConfigError);
}

TEST_CASE("channel redraws are round-keyed and reproducible", "[sim][sample]") {
  const Scenario sc = sample_scenario(8, 11);
  const auto r0 = redraw_channels(sc, 0);
  const auto r0b = redraw_channels(sc, 0);
  const auto r1 = redraw_channels(sc, 1);
  bool any_diff = false;
  for (std::size_t i = 0; i < r0.size(); ++i) {
    REQUIRE(r0[i].channel_gain == r0b[i].channel_gain);
    any_diff = any_diff || r0[i].channel_gain != r1[i].channel_gain;
    // Only the channel moves between rounds.
    REQUIRE(r0[i].max_freq_hz == sc.devices[i].max_freq_hz);
    REQUIRE(r0[i].tx_power_w == sc.devices[i].tx_power_w);
  }
  REQUIRE(any_diff);
}

// ---------------------------------------------------------------------------
// Modeled runs
// ---------------------------------------------------------------------------

TEST_CASE("static channels make every round identical", "[sim][modeled]") {
  const Scenario sc = sample_scenario(16, 3);
  const auto ledgers = run_modeled(sc, Strategy::fedgreen, 4);
  REQUIRE(ledgers.size() == 4);
  for (std::size_t r = 1; r < ledgers.size(); ++r) {
    REQUIRE(ledgers[r].total_energy_j == ledgers[0].total_energy_j);
    REQUIRE(ledgers[r].contribution == ledgers[0].contribution);
    REQUIRE(ledgers[r].goal == ledgers[0].goal);
    for (std::size_t i = 0; i < ledgers[r].devices.size(); ++i) {
      REQUIRE(ledgers[r].devices[i].alpha == ledgers[0].devices[i].alpha);
      REQUIRE(ledgers[r].devices[i].f_hz == ledgers[0].devices[i].f_hz);
    }
  }
  // Cumulative energy is exactly linear in the round count.
  for (std::size_t r = 0; r < ledgers.size(); ++r)
    REQUIRE(ledgers[r].cumulative_energy_j ==
            Catch::Approx(static_cast<double>(r + 1) * ledgers[0].total_energy_j)
                .epsilon(1e-12));
}

TEST_CASE("per-round redraw varies the plan history", "[sim][modeled]") {
  Scenario sc = sample_scenario(16, 3);
  sc.channel_mode = ChannelMode::per_round_redraw;
  const auto ledgers = run_modeled(sc, Strategy::fedgreen, 3);
  bool any_diff = false;
  for (std::size_t r = 1; r < ledgers.size(); ++r)
    any_diff = any_diff || ledgers[r].total_energy_j != ledgers[0].total_energy_j;
  REQUIRE(any_diff);

  const auto again = run_modeled(sc, Strategy::fedgreen, 3);
  for (std::size_t r = 0; r < ledgers.size(); ++r)
    REQUIRE(ledgers[r].total_energy_j == again[r].total_energy_j);
}

TEST_CASE("device records price exactly one round", "[sim][modeled]") {
  const Scenario sc = sample_scenario(16, 9);
  const auto ledgers = run_modeled(sc, Strategy::fedgreen, 1);
  const RoundLedger& ledger = ledgers[0];
  double total = 0.0;
  for (std::size_t i = 0; i < ledger.devices.size(); ++i) {
    const DeviceRoundRecord& rec = ledger.devices[i];
    REQUIRE(rec.alpha >= 1.0);
    REQUIRE(rec.feasible);
    const CostBreakdown cost =
        round_cost(sc.devices[i], sc.config, rec.alpha, rec.f_hz);
    REQUIRE(rec.comm_energy_j == cost.comm_energy_j);
    REQUIRE(rec.comp_energy_j == cost.comp_energy_j);
    REQUIRE(rec.latency_s == cost.latency_s());
    REQUIRE(rec.latency_s <= sc.config.deadline_s * (1.0 + 1e-9));
    total += cost.total_energy_j();
  }
  REQUIRE(ledger.total_energy_j == Catch::Approx(total).epsilon(1e-12));
}

TEST_CASE("fedgreen tops the baselines on sampled scenarios", "[sim][modeled]") {
  for (std::uint64_t seed : {3ull, 5ull, 8ull}) {
    const Scenario sc = sample_scenario(16, seed);
    const double fg = run_modeled(sc, Strategy::fedgreen, 1)[0].goal;
    for (Strategy s :
         {Strategy::random, Strategy::uniform, Strategy::selection}) {
      const double other = run_modeled(sc, s, 1)[0].goal;
      REQUIRE(fg >= other);
    }
  }
}

TEST_CASE("selection rounds keep the full-data contribution normalization",
          "[sim][modeled]") {
  const Scenario sc = sample_scenario(16, 3);
  const RoundLedger uniform = run_modeled(sc, Strategy::uniform, 1)[0];
  const RoundLedger selection = run_modeled(sc, Strategy::selection, 1)[0];
  int sitting_out = 0;
  for (const DeviceRoundRecord& rec : selection.devices)
    if (rec.alpha == 0.0) ++sitting_out;
  REQUIRE(sitting_out == 4);  // ceil(25%) of 16
  // Fewer numerator terms over the same denominator.
  REQUIRE(selection.contribution < uniform.contribution);
  REQUIRE(selection.total_energy_j < uniform.total_energy_j);
}

TEST_CASE("run_modeled argument and population errors", "[sim][modeled]") {
  const Scenario sc = sample_scenario(4, 1);
  REQUIRE_THROWS_AS(run_modeled(sc, Strategy::fedgreen, 0), DomainError);
  REQUIRE_THROWS_AS(run_modeled(sc, Strategy::uncompressed, 1), DomainError);

  // Every device misses the deadline even at f_max: nobody participates.
  Scenario stuck = sc;
  for (DeviceProfile& d : stuck.devices) d.max_freq_hz = 1e7;
  REQUIRE_THROWS_AS(run_modeled(stuck, Strategy::fedgreen, 1), SimError);
}

// ---------------------------------------------------------------------------
// Energy to target
// ---------------------------------------------------------------------------

TEST_CASE("energy_to_target returns the first crossing or nothing",
          "[sim][target]") {
  const Scenario sc = sample_scenario(16, 3);
  const auto ledgers = run_modeled(sc, Strategy::fedgreen, 5);
  // A target below the very first contribution is met at round 1.
  const std::optional<double> cheap =
      energy_to_target(ledgers, ledgers[0].contribution * 0.5);
  REQUIRE(cheap.has_value());
  REQUIRE(*cheap == ledgers[0].cumulative_energy_j);
  // Contribution never reaches 2: unattainable.
  REQUIRE_FALSE(energy_to_target(ledgers, 2.0).has_value());
}

// ---------------------------------------------------------------------------
// Toy end-to-end training
// ---------------------------------------------------------------------------

TEST_CASE("uncompressed toy loss strictly decreases for 20 rounds",
          "[sim][toy]") {
  const Scenario sc = sample_scenario(4, 1);
  ToyTrainSpec spec;
  spec.seed = 1;
  spec.rounds = 20;
  spec.strategy = Strategy::uncompressed;
  const ToyTrainResult res = run_toy_training(sc, spec);
  REQUIRE(res.train_loss.size() == 20);
  for (std::size_t i = 0; i + 1 < res.train_loss.size(); ++i)
    REQUIRE(res.train_loss[i + 1] < res.train_loss[i]);
}

TEST_CASE("quantization-only compression matches dense training closely",
          "[sim][toy]") {
  const Scenario sc = sample_scenario(4, 1);
  ToyTrainSpec spec;
  spec.seed = 1;
  spec.rounds = 25;
  spec.strategy = Strategy::uncompressed;
  const ToyTrainResult dense = run_toy_training(sc, spec);

  ToyTrainSpec fixed = spec;
  fixed.strategy = Strategy::fedgreen;
  fixed.fixed_alpha = 2.0;  // toy payload floor: no kernel pruning at ratio 2
  const ToyTrainResult quantized = run_toy_training(sc, fixed);
  REQUIRE(std::abs(dense.test_accuracy.back() -
                   quantized.test_accuracy.back()) <= 0.05);
}

TEST_CASE("toy training is reproducible and validates its spec", "[sim][toy]") {
  const Scenario sc = sample_scenario(4, 2);
  ToyTrainSpec spec;
  spec.seed = 9;
  spec.rounds = 5;
  const ToyTrainResult a = run_toy_training(sc, spec);
  const ToyTrainResult b = run_toy_training(sc, spec);
  REQUIRE(a.test_accuracy == b.test_accuracy);
  REQUIRE(a.train_loss == b.train_loss);
  for (std::size_t l = 0; l < a.model.weights.size(); ++l)
    REQUIRE(a.model.weights[l].values == b.model.weights[l].values);

  ToyTrainSpec bad = spec;
  bad.rounds = 0;
  REQUIRE_THROWS_AS(run_toy_training(sc, bad), ConfigError);
  bad = spec;
  bad.learning_rate = 0.0;
  REQUIRE_THROWS_AS(run_toy_training(sc, bad), ConfigError);
  bad = spec;
  bad.fixed_alpha = 0.5;
  REQUIRE_THROWS_AS(run_toy_training(sc, bad), ConfigError);
}

// ---------------------------------------------------------------------------
// Conservation: all-ones masks with zero quantization spacing
// ---------------------------------------------------------------------------

namespace {

/// Gradient whose entries all share one magnitude, signs alternating by flat
/// index: quantization at any level count is exact (abs_min == abs_max).
ModelGradient constant_magnitude_model(double magnitude) {
  const std::vector<LayerShape> shapes = {
      {0, LayerKind::conv, 3, 2, 3},
      {1, LayerKind::bias, 3, 1, 1},
      {2, LayerKind::fully_connected, 4, 6, 1},
      {3, LayerKind::bias, 4, 1, 1},
  };
  ModelGradient model;
  for (const LayerShape& shape : shapes) {
    GradientTensor t = GradientTensor::zeros(shape);
    for (std::size_t i = 0; i < t.values.size(); ++i)
      t.values[i] = static_cast<float>(i % 2 == 0 ? magnitude : -magnitude);
    model.layers.push_back(std::move(t));
  }
  return model;
}

}  // namespace

TEST_CASE("ratio-1 wire path aggregates exactly like dense FedAvg",
          "[sim][conservation]") {
  // Ratio 1 prunes nothing (all-ones masks) and one shared magnitude makes
  // the quantizer spacing zero, so decode is bit-exact; the masked aggregate
  // must then equal the dense data-weighted mean, float for float.
  std::vector<ModelGradient> dense;
  std::vector<std::int64_t> counts{1, 2, 5};
  std::vector<DeviceUpload> uploads;
  for (int d = 0; d < 3; ++d) {
    ModelGradient m = constant_magnitude_model(0.25 * (d + 1));
    m.data_count = counts[static_cast<std::size_t>(d)];
    const CompressedModel compressed = compress_model(m, 1.0, {}, 1000 + d);
    REQUIRE(compressed.pruning_rate == 0.0);
    DeviceUpload upload;
    upload.device_id = d;
    upload.blobs = parse_model(serialize_model(compressed.layers));
    upload.data_count = counts[static_cast<std::size_t>(d)];
    uploads.push_back(std::move(upload));
    dense.push_back(std::move(m));
  }

  const GlobalGradient wire = aggregate(uploads);
  const GlobalGradient oracle = toy_dense_average(dense, counts);
  REQUIRE(wire.layers.size() == oracle.layers.size());
  for (std::size_t l = 0; l < wire.layers.size(); ++l) {
    REQUIRE(wire.layers[l].values == oracle.layers[l].values);
    for (std::int32_t c : wire.coverage[l]) REQUIRE(c == 3);
  }
  // Hand value: (1*0.25 + 2*0.5 + 5*0.75) / 8 = 0.625 at even entries.
  for (std::size_t l = 0; l < wire.layers.size(); ++l)
    for (std::size_t i = 0; i < wire.layers[l].values.size(); ++i)
      REQUIRE(wire.layers[l].values[i] == (i % 2 == 0 ? 0.625f : -0.625f));
}
