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

#include <algorithm>
#include <cstdint>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "fedgreen/aggregate.hpp"
#include "fedgreen/codec.hpp"
#include "fedgreen/grad.hpp"
#include "fedgreen/prng.hpp"

using namespace fedgreen;

namespace {

/// Builds an upload whose decode reproduces `tensor` exactly on the kept
/// kernels: encode with delta-0-safe values is lossy in general, so tests
/// that need exact values pre-quantize by construction (mask + raw grid).
DeviceUpload upload_from_tensor(int device_id, const GradientTensor& tensor,
                                const std::vector<std::uint8_t>& mask,
                                std::int64_t data_count, int levels,
                                std::uint64_t seed) {
  SparsifyResult sparse;
  sparse.mask = mask;
  const int ksize = tensor.shape.kernel_size();
  for (std::size_t j = 0; j < mask.size(); ++j) {
    if (!mask[j]) continue;
    const std::size_t base = j * static_cast<std::size_t>(ksize);
    sparse.kept_values.insert(sparse.kept_values.end(),
                              tensor.values.begin() + base,
                              tensor.values.begin() + base + ksize);
  }
  const QuantizedResult q = quantize(sparse.kept_values, levels, seed);
  DeviceUpload upload;
  upload.device_id = device_id;
  upload.data_count = data_count;
  upload.blobs.push_back(encode(tensor.shape, mask, q));
  return upload;
}

GradientTensor tensor_from_shape_value(const LayerShape& shape, float value) {
  GradientTensor t = GradientTensor::zeros(shape);
  for (float& v : t.values) v = value;
  return t;
}

bool same_values(const GlobalGradient& a, const GlobalGradient& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t l = 0; l < a.layers.size(); ++l)
    if (a.layers[l].values != b.layers[l].values) return false;
  return true;
}

}  // namespace

TEST_CASE("single device with full mask is the identity", "[aggregate]") {
  const LayerShape shape{0, LayerKind::conv, 2, 2, 3};
  const GradientTensor t = generate_synthetic(shape, {1, 4.0});
  const DeviceUpload upload =
      upload_from_tensor(0, t, std::vector<std::uint8_t>(4, 1), 7, 8, 2);
  const GlobalGradient global = aggregate({upload});
  const GradientTensor expect = decode(upload.blobs[0]);
  REQUIRE(global.layers[0].values == expect.values);
  for (std::int32_t c : global.coverage[0]) REQUIRE(c == 1);
}

TEST_CASE("Eq. 4 arithmetic: weighted two-device entry", "[aggregate]") {
  // Two devices, D1=1, D2=3, values 0.4 and 0.0, both masks 1:
  // (0.4*1 + 0.0*3)/4 = 0.1. Values chosen on the quantization grid
  // (delta = |0.4|..|0.4| per device is degenerate) so decode is exact.
  const LayerShape shape{0, LayerKind::conv, 1, 1, 1};
  GradientTensor a = tensor_from_shape_value(shape, 0.4f);
  GradientTensor b = tensor_from_shape_value(shape, 0.0f);
  const DeviceUpload u1 = upload_from_tensor(1, a, {1}, 1, 8, 0);
  const DeviceUpload u2 = upload_from_tensor(2, b, {1}, 3, 8, 0);
  const GlobalGradient global = aggregate({u1, u2});
  REQUIRE(global.layers[0].values[0] == Catch::Approx(0.1).margin(1e-7));
  REQUIRE(global.coverage[0][0] == 2);
}

TEST_CASE("uncovered entries are exactly zero, single-cover passes through",
          "[aggregate]") {
  const LayerShape shape{0, LayerKind::conv, 2, 1, 2};
  // Device 1 keeps kernel 0 only; device 2 keeps kernel 0 only as well, so
  // kernel 1's entries have no contributor.
  GradientTensor t1 = GradientTensor::zeros(shape);
  GradientTensor t2 = GradientTensor::zeros(shape);
  for (int e = 0; e < 4; ++e) {
    t1.values[static_cast<std::size_t>(e)] = 2.0f;
    t2.values[static_cast<std::size_t>(e)] = 2.0f;
    t1.values[static_cast<std::size_t>(4 + e)] = 9.0f;  // pruned away
    t2.values[static_cast<std::size_t>(4 + e)] = 9.0f;
  }
  const DeviceUpload u1 = upload_from_tensor(1, t1, {1, 0}, 5, 8, 1);
  const DeviceUpload u2 = upload_from_tensor(2, t2, {1, 0}, 3, 8, 1);
  const GlobalGradient global = aggregate({u1, u2});
  for (int e = 0; e < 4; ++e) {
    REQUIRE(global.layers[0].values[static_cast<std::size_t>(e)] == 2.0f);
    REQUIRE(global.layers[0].values[static_cast<std::size_t>(4 + e)] == 0.0f);
    REQUIRE(global.coverage[0][static_cast<std::size_t>(e)] == 2);
    REQUIRE(global.coverage[0][static_cast<std::size_t>(4 + e)] == 0);
  }

  // Entry covered by exactly one device passes that device's value through.
  const DeviceUpload u3 = upload_from_tensor(3, t1, {0, 1}, 11, 8, 1);
  const GlobalGradient mixed = aggregate({u1, u3});
  const GradientTensor t3 = decode(u3.blobs[0]);
  for (int e = 0; e < 4; ++e)
    REQUIRE(mixed.layers[0].values[static_cast<std::size_t>(4 + e)] ==
            t3.values[static_cast<std::size_t>(4 + e)]);
}

TEST_CASE("aggregate equals the brute-force oracle", "[aggregate]") {
  Rng rng(606);
  for (int trial = 0; trial < 100; ++trial) {
    const int devices = 2 + static_cast<int>(rng.next_u64() % 5);
    const int c_out = 1 + static_cast<int>(rng.next_u64() % 4);
    const int c_in = 1 + static_cast<int>(rng.next_u64() % 4);
    const int k = 1 + 2 * static_cast<int>(rng.next_u64() % 2);
    const std::vector<LayerShape> shapes = {
        {0, LayerKind::conv, c_out, c_in, k},
        {1, LayerKind::bias, c_out, 1, 1},
    };

    std::vector<DeviceUpload> uploads;
    std::vector<ModelGradient> dense;
    std::vector<std::vector<std::vector<std::uint8_t>>> masks;
    std::vector<std::int64_t> counts;
    for (int d = 0; d < devices; ++d) {
      const ModelGradient grad =
          synthesize_model(shapes, rng.next_u64(), 1 + rng.next_u64() % 50);
      const double rho = rng.uniform() * 0.8;
      const CompressedModel compressed =
          compress_model(grad, 1.0, CompressionConfig{8, 4, rho},
                         rng.next_u64());
      DeviceUpload upload;
      upload.device_id = d;
      upload.data_count = grad.data_count;
      upload.blobs = compressed.layers;
      uploads.push_back(upload);

      // The oracle consumes the decoded (quantized) tensors and the same
      // masks expanded per entry.
      ModelGradient decoded;
      decoded.data_count = grad.data_count;
      std::vector<std::vector<std::uint8_t>> device_masks;
      for (const auto& blob : compressed.layers) {
        decoded.layers.push_back(decode(blob));
        device_masks.push_back(expand_kernel_mask(blob.mask, blob.shape));
      }
      dense.push_back(std::move(decoded));
      masks.push_back(std::move(device_masks));
      counts.push_back(grad.data_count);
    }

    const GlobalGradient fast = aggregate(uploads);
    const GlobalGradient slow = aggregate_oracle(dense, masks, counts);
    REQUIRE(same_values(fast, slow));
    REQUIRE(fast.coverage == slow.coverage);
  }
}

TEST_CASE("permutation invariance is exact", "[aggregate]") {
  Rng rng(707);
  const std::vector<LayerShape> shapes = {{0, LayerKind::conv, 3, 3, 3}};
  std::vector<DeviceUpload> uploads;
  for (int d = 0; d < 6; ++d) {
    const ModelGradient grad =
        synthesize_model(shapes, rng.next_u64(), 1 + rng.next_u64() % 40);
    const CompressedModel compressed = compress_model(
        grad, 1.0, CompressionConfig{8, 4, rng.uniform() * 0.7}, rng.next_u64());
    DeviceUpload upload;
    upload.device_id = d;
    upload.data_count = grad.data_count;
    upload.blobs = compressed.layers;
    uploads.push_back(upload);
  }
  const GlobalGradient base = aggregate(uploads);
  for (int perm = 0; perm < 10; ++perm) {
    std::vector<DeviceUpload> shuffled = uploads;
    for (std::size_t i = shuffled.size(); i > 1; --i)
      std::swap(shuffled[i - 1], shuffled[rng.next_u64() % i]);
    const GlobalGradient again = aggregate(shuffled);
    REQUIRE(same_values(base, again));
  }
}

TEST_CASE("D-scaling invariance is exact for power-of-two scaling",
          "[aggregate]") {
  Rng rng(808);
  const std::vector<LayerShape> shapes = {{0, LayerKind::conv, 2, 4, 3}};
  std::vector<DeviceUpload> uploads;
  for (int d = 0; d < 4; ++d) {
    const ModelGradient grad =
        synthesize_model(shapes, rng.next_u64(), 1 + rng.next_u64() % 30);
    const CompressedModel compressed = compress_model(
        grad, 1.0, CompressionConfig{8, 4, rng.uniform() * 0.5}, rng.next_u64());
    DeviceUpload upload;
    upload.device_id = d;
    upload.data_count = grad.data_count;
    upload.blobs = compressed.layers;
    uploads.push_back(upload);
  }
  const GlobalGradient base = aggregate(uploads);
  for (std::int64_t scale : {2, 4, 1024}) {
    std::vector<DeviceUpload> scaled = uploads;
    for (auto& upload : scaled) upload.data_count *= scale;
    REQUIRE(same_values(base, aggregate(scaled)));
  }
}

TEST_CASE("aggregated entries stay inside the contributors' range",
          "[aggregate]") {
  Rng rng(909);
  const std::vector<LayerShape> shapes = {{0, LayerKind::conv, 3, 2, 3}};
  std::vector<DeviceUpload> uploads;
  std::vector<GradientTensor> decoded;
  std::vector<std::vector<std::uint8_t>> covered;
  for (int d = 0; d < 5; ++d) {
    const ModelGradient grad = synthesize_model(shapes, rng.next_u64(), 10 + d);
    const CompressedModel compressed = compress_model(
        grad, 1.0, CompressionConfig{8, 4, rng.uniform() * 0.6}, rng.next_u64());
    DeviceUpload upload;
    upload.device_id = d;
    upload.data_count = 10 + d;
    upload.blobs = compressed.layers;
    uploads.push_back(upload);
    decoded.push_back(decode(compressed.layers[0]));
    covered.push_back(
        expand_kernel_mask(compressed.layers[0].mask, shapes[0]));
  }
  const GlobalGradient global = aggregate(uploads);
  for (std::size_t e = 0; e < global.layers[0].values.size(); ++e) {
    float lo = std::numeric_limits<float>::max();
    float hi = std::numeric_limits<float>::lowest();
    bool any = false;
    for (std::size_t d = 0; d < decoded.size(); ++d) {
      if (!covered[d][e]) continue;
      lo = std::min(lo, decoded[d].values[e]);
      hi = std::max(hi, decoded[d].values[e]);
      any = true;
    }
    if (!any) {
      REQUIRE(global.layers[0].values[e] == 0.0f);
    } else {
      REQUIRE(global.layers[0].values[e] >= lo - 1e-6f);
      REQUIRE(global.layers[0].values[e] <= hi + 1e-6f);
    }
  }
}

TEST_CASE("all-ones masks with equal weights reduce to the FedAvg mean",
          "[aggregate]") {
  const LayerShape shape{0, LayerKind::conv, 2, 2, 3};
  std::vector<ModelGradient> dense;
  std::vector<std::vector<std::vector<std::uint8_t>>> masks;
  std::vector<std::int64_t> counts;
  for (int d = 0; d < 3; ++d) {
    ModelGradient m;
    m.data_count = 10;
    m.layers.push_back(generate_synthetic(shape, {static_cast<std::uint64_t>(d), 2.0}));
    dense.push_back(m);
    masks.push_back({std::vector<std::uint8_t>(36, 1)});
    counts.push_back(10);
  }
  const GlobalGradient mean = aggregate_oracle(dense, masks, counts);
  for (std::size_t e = 0; e < 36; ++e) {
    const double expect = (static_cast<double>(dense[0].layers[0].values[e]) +
                           dense[1].layers[0].values[e] +
                           dense[2].layers[0].values[e]) /
                          3.0;
    REQUIRE(mean.layers[0].values[e] == static_cast<float>(expect));
  }

  // Unequal weights: the data-weighted mean.
  counts = {1, 2, 5};
  for (std::size_t d = 0; d < 3; ++d) dense[d].data_count = counts[d];
  const GlobalGradient weighted = aggregate_oracle(dense, masks, counts);
  for (std::size_t e = 0; e < 36; ++e) {
    const double expect = (1.0 * dense[0].layers[0].values[e] +
                           2.0 * dense[1].layers[0].values[e] +
                           5.0 * dense[2].layers[0].values[e]) /
                          8.0;
    REQUIRE(weighted.layers[0].values[e] == static_cast<float>(expect));
  }
}

TEST_CASE("error paths: empty uploads, bad weights, shape mismatch",
          "[aggregate]") {
  REQUIRE_THROWS_AS(aggregate({}), DomainError);

  const LayerShape shape{0, LayerKind::conv, 2, 2, 3};
  const GradientTensor t = generate_synthetic(shape, {3, 2.0});
  DeviceUpload u1 = upload_from_tensor(0, t, std::vector<std::uint8_t>(4, 1), 5, 8, 0);
  DeviceUpload bad = u1;
  bad.data_count = 0;
  REQUIRE_THROWS_AS(aggregate({bad}), DomainError);

  const LayerShape other{0, LayerKind::conv, 2, 2, 5};
  const GradientTensor t2 = generate_synthetic(other, {3, 2.0});
  DeviceUpload u2 = upload_from_tensor(1, t2, std::vector<std::uint8_t>(4, 1), 5, 8, 0);
  REQUIRE_THROWS_AS(aggregate({u1, u2}), DomainError);
}
