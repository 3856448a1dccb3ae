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
/// \brief Toy end-to-end federated trainer.
///
/// A fixed 330-parameter network (3x3 conv with 4 filters and ReLU over an
/// 8x8 input, then a 2-way linear head) is trained on synthetic two-blob
/// images with full-batch SGD.  Every round, each device's dense gradient
/// travels the complete wire path: sparsify, quantize, encode, serialize,
/// parse, decode, masked aggregate.  Cost ledgers are priced from the
/// scenario's device population exactly as in run_modeled(); the toy shards
/// only supply the learning signal.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fedgreen/aggregate.hpp"
#include "fedgreen/codec.hpp"
#include "fedgreen/errors.hpp"
#include "fedgreen/grad.hpp"
#include "fedgreen/models.hpp"
#include "fedgreen/optimizer.hpp"
#include "fedgreen/prng.hpp"
#include "fedgreen/sim.hpp"

namespace fedgreen {

inline constexpr int kToyImageSide = 8;
inline constexpr int kToyImagePixels = kToyImageSide * kToyImageSide;
inline constexpr int kToyConvFilters = 4;
inline constexpr int kToyConvKernel = 3;
inline constexpr int kToyFeatureSide = kToyImageSide - kToyConvKernel + 1;  // valid conv
inline constexpr int kToyFeatureCount =
    kToyConvFilters * kToyFeatureSide * kToyFeatureSide;  // 144
inline constexpr int kToyClasses = 2;

/// Shapes of the toy network's four layers, in upload order.
inline std::vector<LayerShape> toy_layer_shapes() {
  return {
      {0, LayerKind::conv, kToyConvFilters, 1, kToyConvKernel},
      {1, LayerKind::bias, kToyConvFilters, 1, 1},
      {2, LayerKind::fully_connected, kToyClasses, kToyFeatureCount, 1},
      {3, LayerKind::bias, kToyClasses, 1, 1},
  };
}

struct ToyModel {
  std::vector<GradientTensor> weights;  // parallel to toy_layer_shapes()

  const std::vector<float>& conv() const { return weights[0].values; }
  const std::vector<float>& conv_bias() const { return weights[1].values; }
  const std::vector<float>& fc() const { return weights[2].values; }
  const std::vector<float>& fc_bias() const { return weights[3].values; }
};

struct ToySample {
  std::array<float, kToyImagePixels> pixels;
  int label = 0;
};

struct ToyTrainSpec {
  std::uint64_t seed = 0;
  int rounds = 40;
  int samples_per_device = 64;
  double learning_rate = 0.05;
  Strategy strategy = Strategy::fedgreen;
  /// When positive, every device compresses at exactly this ratio and the
  /// strategy field is ignored for the payload (ledgers still price the
  /// fixed ratio).  Used for controlled compression sweeps.
  double fixed_alpha = 0.0;
};

inline void validate_toy_spec(const ToyTrainSpec& spec) {
  if (spec.rounds < 1) throw ConfigError("toy.rounds", "must be at least 1");
  if (spec.samples_per_device < 8)
    throw ConfigError("toy.samples_per_device", "must be at least 8");
  if (!(spec.learning_rate > 0.0))
    throw ConfigError("toy.learning_rate", "must be positive");
  if (spec.fixed_alpha != 0.0 && !(spec.fixed_alpha >= 1.0))
    throw ConfigError("toy.fixed_alpha", "must be 0 (disabled) or >= 1");
}

struct ToyTrainResult {
  std::vector<RoundLedger> ledgers;
  std::vector<double> test_accuracy;  // after each round's update
  std::vector<double> train_loss;     // at the weights the round started from
  ToyModel model;                     // final weights
};

namespace detail {

inline constexpr std::uint64_t kStreamToyInit = 0x696e6974;            // "init"
inline constexpr std::uint64_t kStreamToyData = 0x73686172;            // "shar"
inline constexpr std::uint64_t kStreamToyTest = 0x74657374;            // "test"
inline constexpr std::uint64_t kStreamToyQuantBase = 0x7175616e00000000ull;  // "quan"

inline ToySample make_toy_sample(Rng& rng, int label) {
  // Two Gaussian intensity blobs near opposite corners, jittered per sample.
  const double base_row = label == 0 ? 2.5 : 5.5;
  const double base_col = label == 0 ? 2.5 : 5.5;
  const double center_row = base_row + rng.uniform(-0.5, 0.5);
  const double center_col = base_col + rng.uniform(-0.5, 0.5);
  const double sigma = 1.2;

  ToySample sample;
  sample.label = label;
  for (int r = 0; r < kToyImageSide; ++r) {
    for (int c = 0; c < kToyImageSide; ++c) {
      const double dr = static_cast<double>(r) - center_row;
      const double dc = static_cast<double>(c) - center_col;
      const double value =
          std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma)) + 0.1 * rng.normal();
      sample.pixels[static_cast<std::size_t>(r * kToyImageSide + c)] =
          static_cast<float>(value);
    }
  }
  return sample;
}

inline std::vector<ToySample> make_toy_shard(std::uint64_t stream, int count) {
  Rng rng(stream);
  std::vector<ToySample> shard;
  shard.reserve(static_cast<std::size_t>(count));
  for (int s = 0; s < count; ++s) shard.push_back(make_toy_sample(rng, s % 2));
  return shard;
}

struct ToyForward {
  std::array<float, kToyFeatureCount> pre;   // conv pre-activations
  std::array<float, kToyFeatureCount> hidden;  // ReLU outputs
  std::array<double, kToyClasses> logits;
  std::array<double, kToyClasses> probabilities;
};

inline ToyForward toy_forward(const ToyModel& m, const ToySample& sample) {
  ToyForward f;
  for (int o = 0; o < kToyConvFilters; ++o) {
    for (int i = 0; i < kToyFeatureSide; ++i) {
      for (int j = 0; j < kToyFeatureSide; ++j) {
        float acc = m.conv_bias()[static_cast<std::size_t>(o)];
        for (int r = 0; r < kToyConvKernel; ++r)
          for (int c = 0; c < kToyConvKernel; ++c)
            acc += m.conv()[static_cast<std::size_t>(o * 9 + r * 3 + c)] *
                   sample.pixels[static_cast<std::size_t>((i + r) * kToyImageSide + j + c)];
        const std::size_t u = static_cast<std::size_t>((o * kToyFeatureSide + i) *
                                                       kToyFeatureSide + j);
        f.pre[u] = acc;
        f.hidden[u] = acc > 0.0f ? acc : 0.0f;
      }
    }
  }
  double max_logit = -1e300;
  for (int cl = 0; cl < kToyClasses; ++cl) {
    double z = static_cast<double>(m.fc_bias()[static_cast<std::size_t>(cl)]);
    for (int u = 0; u < kToyFeatureCount; ++u)
      z += static_cast<double>(m.fc()[static_cast<std::size_t>(cl * kToyFeatureCount + u)]) *
           static_cast<double>(f.hidden[static_cast<std::size_t>(u)]);
    f.logits[static_cast<std::size_t>(cl)] = z;
    max_logit = std::max(max_logit, z);
  }
  double norm = 0.0;
  for (int cl = 0; cl < kToyClasses; ++cl) {
    f.probabilities[static_cast<std::size_t>(cl)] =
        std::exp(f.logits[static_cast<std::size_t>(cl)] - max_logit);
    norm += f.probabilities[static_cast<std::size_t>(cl)];
  }
  for (int cl = 0; cl < kToyClasses; ++cl) f.probabilities[static_cast<std::size_t>(cl)] /= norm;
  return f;
}

struct ToyBatchGradient {
  ModelGradient grad;
  double mean_loss = 0.0;
};

/// Full-batch cross-entropy gradient over one shard, averaged per sample.
inline ToyBatchGradient toy_batch_gradient(const ToyModel& m,
                                           const std::vector<ToySample>& shard) {
  const std::vector<LayerShape> shapes = toy_layer_shapes();
  std::vector<std::vector<double>> acc(shapes.size());
  for (std::size_t l = 0; l < shapes.size(); ++l)
    acc[l].assign(static_cast<std::size_t>(shapes[l].element_count()), 0.0);

  double loss_sum = 0.0;
  for (const ToySample& sample : shard) {
    const ToyForward f = toy_forward(m, sample);
    loss_sum += -std::log(f.probabilities[static_cast<std::size_t>(sample.label)]);

    std::array<double, kToyClasses> dz;
    for (int cl = 0; cl < kToyClasses; ++cl)
      dz[static_cast<std::size_t>(cl)] =
          f.probabilities[static_cast<std::size_t>(cl)] - (cl == sample.label ? 1.0 : 0.0);

    std::array<double, kToyFeatureCount> dh{};
    for (int cl = 0; cl < kToyClasses; ++cl) {
      acc[3][static_cast<std::size_t>(cl)] += dz[static_cast<std::size_t>(cl)];
      for (int u = 0; u < kToyFeatureCount; ++u) {
        acc[2][static_cast<std::size_t>(cl * kToyFeatureCount + u)] +=
            dz[static_cast<std::size_t>(cl)] *
            static_cast<double>(f.hidden[static_cast<std::size_t>(u)]);
        dh[static_cast<std::size_t>(u)] +=
            dz[static_cast<std::size_t>(cl)] *
            static_cast<double>(m.fc()[static_cast<std::size_t>(cl * kToyFeatureCount + u)]);
      }
    }

    for (int o = 0; o < kToyConvFilters; ++o) {
      for (int i = 0; i < kToyFeatureSide; ++i) {
        for (int j = 0; j < kToyFeatureSide; ++j) {
          const std::size_t u =
              static_cast<std::size_t>((o * kToyFeatureSide + i) * kToyFeatureSide + j);
          if (f.pre[u] <= 0.0f) continue;  // ReLU gate
          const double g = dh[u];
          acc[1][static_cast<std::size_t>(o)] += g;
          for (int r = 0; r < kToyConvKernel; ++r)
            for (int c = 0; c < kToyConvKernel; ++c)
              acc[0][static_cast<std::size_t>(o * 9 + r * 3 + c)] +=
                  g * static_cast<double>(
                          sample.pixels[static_cast<std::size_t>((i + r) * kToyImageSide + j + c)]);
        }
      }
    }
  }

  const double inv = 1.0 / static_cast<double>(shard.size());
  ToyBatchGradient out;
  out.mean_loss = loss_sum * inv;
  out.grad.data_count = static_cast<std::int64_t>(shard.size());
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    GradientTensor tensor = GradientTensor::zeros(shapes[l]);
    for (std::size_t e = 0; e < acc[l].size(); ++e)
      tensor.values[e] = static_cast<float>(acc[l][e] * inv);
    out.grad.layers.push_back(std::move(tensor));
  }
  return out;
}

}  // namespace detail

/// Seeded weight initialization: zero biases, normal weights scaled by
/// 0.3 / sqrt(fan_in), one stream per layer.
inline ToyModel toy_initial_model(std::uint64_t seed) {
  ToyModel m;
  for (const LayerShape& shape : toy_layer_shapes()) {
    GradientTensor tensor = GradientTensor::zeros(shape);
    if (shape.kind != LayerKind::bias) {
      const double fan_in = shape.kind == LayerKind::conv
                                ? static_cast<double>(shape.c_in) * shape.kernel_size()
                                : static_cast<double>(shape.c_in);
      const double scale = 0.3 / std::sqrt(fan_in);
      Rng rng(derive_stream(seed, static_cast<std::uint64_t>(shape.layer_id),
                            detail::kStreamToyInit));
      for (float& w : tensor.values) w = static_cast<float>(scale * rng.normal());
    }
    m.weights.push_back(std::move(tensor));
  }
  return m;
}

inline int toy_predict(const ToyModel& m, const ToySample& sample) {
  const detail::ToyForward f = detail::toy_forward(m, sample);
  return f.logits[1] > f.logits[0] ? 1 : 0;
}

/// Dense data-weighted FedAvg with the same 64-bit accumulation and single
/// float rounding as aggregate(); the uncompressed baseline uses this, and
/// the Delta = 0 conservation property compares the wire path against it.
inline GlobalGradient toy_dense_average(const std::vector<ModelGradient>& gradients,
                                        const std::vector<std::int64_t>& data_counts) {
  std::vector<std::vector<std::vector<std::uint8_t>>> masks(gradients.size());
  for (std::size_t d = 0; d < gradients.size(); ++d) {
    masks[d].resize(gradients[d].layers.size());
    for (std::size_t l = 0; l < gradients[d].layers.size(); ++l)
      masks[d][l].assign(
          static_cast<std::size_t>(gradients[d].layers[l].shape.element_count()), 1);
  }
  return aggregate_oracle(gradients, masks, data_counts);
}

/// Runs `spec.rounds` federated rounds on the toy task.  Per-device shards
/// and weight init derive from spec.seed; compression plans derive from the
/// scenario exactly as in run_modeled().  Throws SimError if the training
/// loss exceeds 10x its initial value for 10 consecutive rounds.
inline ToyTrainResult run_toy_training(const Scenario& scenario, const ToyTrainSpec& spec,
                                       const CompressionConfig& codec_config = {}) {
  validate_scenario(scenario);
  validate_toy_spec(spec);
  validate_compression_config(codec_config);

  std::vector<std::vector<ToySample>> shards(scenario.devices.size());
  for (std::size_t i = 0; i < scenario.devices.size(); ++i)
    shards[i] = detail::make_toy_shard(
        derive_stream(spec.seed,
                      static_cast<std::uint64_t>(scenario.devices[i].device_id),
                      detail::kStreamToyData),
        spec.samples_per_device);
  const std::vector<ToySample> test_set =
      detail::make_toy_shard(derive_stream(spec.seed, 0, detail::kStreamToyTest), 256);

  ToyTrainResult result;
  result.model = toy_initial_model(spec.seed);

  double initial_loss = 0.0;
  int divergence_streak = 0;
  double cumulative_energy = 0.0;

  for (int round = 0; round < spec.rounds; ++round) {
    const std::vector<DeviceProfile> devices =
        scenario.channel_mode == ChannelMode::per_round_redraw ? redraw_channels(scenario, round)
                                                               : scenario.devices;

    // Plans: fixed ratio, dense baseline at ratio 1, or the chosen strategy.
    std::vector<CompressionPlan> plans;
    if (spec.fixed_alpha > 0.0) {
      for (const DeviceProfile& dev : devices)
        plans.push_back(
            detail::plan_from_alpha(dev, scenario.config, scenario.accuracy_model,
                                    spec.fixed_alpha));
    } else if (spec.strategy == Strategy::uncompressed) {
      for (const DeviceProfile& dev : devices)
        plans.push_back(
            detail::plan_from_alpha(dev, scenario.config, scenario.accuracy_model, 1.0));
    } else {
      plans = detail::plans_for_round(devices, scenario.config, scenario.accuracy_model,
                                      spec.strategy, scenario.seed, round,
                                      scenario.channel_mode);
    }

    // Local full-batch gradients for every device holding a plan.
    std::vector<ModelGradient> dense;
    std::vector<std::int64_t> dense_counts;
    std::vector<int> participant_ids;
    std::vector<const CompressionPlan*> participant_plans;
    double loss_sum = 0.0;
    for (std::size_t i = 0; i < devices.size(); ++i) {
      const CompressionPlan* plan = nullptr;
      for (const CompressionPlan& p : plans)
        if (p.device_id == devices[i].device_id) {
          plan = &p;
          break;
        }
      if (plan == nullptr || !(plan->alpha >= 1.0)) continue;
      detail::ToyBatchGradient batch = detail::toy_batch_gradient(result.model, shards[i]);
      loss_sum += batch.mean_loss;
      dense.push_back(std::move(batch.grad));
      dense_counts.push_back(spec.samples_per_device);
      participant_ids.push_back(devices[i].device_id);
      participant_plans.push_back(plan);
    }
    if (dense.empty())
      throw SimError("round " + std::to_string(round) + ": no participating device");

    // Global update: dense FedAvg, or the full wire path per device.
    GlobalGradient global;
    const bool dense_path = spec.strategy == Strategy::uncompressed && spec.fixed_alpha == 0.0;
    if (dense_path) {
      global = toy_dense_average(dense, dense_counts);
    } else {
      std::vector<DeviceUpload> uploads;
      for (std::size_t d = 0; d < dense.size(); ++d) {
        const double alpha = spec.fixed_alpha > 0.0
                                 ? spec.fixed_alpha
                                 : std::max(1.0, participant_plans[d]->alpha);
        const CompressedModel compressed = compress_model(
            dense[d], alpha, codec_config,
            derive_stream(spec.seed, static_cast<std::uint64_t>(participant_ids[d]),
                          detail::kStreamToyQuantBase |
                              static_cast<std::uint32_t>(round)));
        const std::vector<std::uint8_t> bytes = serialize_model(compressed.layers);
        DeviceUpload upload;
        upload.device_id = participant_ids[d];
        upload.blobs = parse_model(bytes);
        upload.data_count = dense_counts[d];
        uploads.push_back(std::move(upload));
      }
      global = aggregate(uploads);
    }

    for (std::size_t l = 0; l < result.model.weights.size(); ++l)
      for (std::size_t e = 0; e < result.model.weights[l].values.size(); ++e)
        result.model.weights[l].values[e] = static_cast<float>(
            static_cast<double>(result.model.weights[l].values[e]) -
            spec.learning_rate * static_cast<double>(global.layers[l].values[e]));

    const double train_loss = loss_sum / static_cast<double>(dense.size());
    if (round == 0) initial_loss = train_loss;
    if (round > 0 && train_loss > 10.0 * initial_loss) {
      if (++divergence_streak >= 10)
        throw SimError("training diverged: loss above 10x initial for 10 rounds");
    } else {
      divergence_streak = 0;
    }

    int correct = 0;
    for (const ToySample& sample : test_set)
      if (toy_predict(result.model, sample) == sample.label) ++correct;

    result.train_loss.push_back(train_loss);
    result.test_accuracy.push_back(static_cast<double>(correct) /
                                   static_cast<double>(test_set.size()));

    // Ledger: price the round from the scenario population, as run_modeled.
    RoundLedger ledger;
    ledger.round_index = round;
    ledger.devices.resize(devices.size());
    std::vector<double> alphas;
    std::vector<std::int64_t> data_counts;
    double goal_sum = 0.0;
    for (std::size_t i = 0; i < devices.size(); ++i) {
      DeviceRoundRecord& rec = ledger.devices[i];
      rec.device_id = devices[i].device_id;
      const CompressionPlan* plan = nullptr;
      for (const CompressionPlan& p : plans)
        if (p.device_id == devices[i].device_id) {
          plan = &p;
          break;
        }
      if (plan == nullptr || !(plan->alpha >= 1.0)) continue;
      const CostBreakdown cost =
          round_cost(devices[i], scenario.config, plan->alpha, plan->f_hz);
      rec.alpha = plan->alpha;
      rec.f_hz = plan->f_hz;
      rec.comm_energy_j = cost.comm_energy_j;
      rec.comp_energy_j = cost.comp_energy_j;
      rec.latency_s = cost.latency_s();
      rec.feasible = plan->feasible;
      ledger.total_energy_j += cost.total_energy_j();
      goal_sum += plan->objective_share;
      alphas.push_back(plan->alpha);
      data_counts.push_back(devices[i].data_count);
    }
    ledger.contribution = contribution(scenario.accuracy_model, alphas, data_counts,
                                       scenario.config.total_data);
    ledger.goal = goal_sum;
    cumulative_energy += ledger.total_energy_j;
    ledger.cumulative_energy_j = cumulative_energy;
    result.ledgers.push_back(std::move(ledger));
  }
  return result;
}

}  // namespace fedgreen
