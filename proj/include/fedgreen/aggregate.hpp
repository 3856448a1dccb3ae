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

/// \file aggregate.hpp
/// \brief Server-side masked, data-weighted element-wise aggregation.

#ifndef FEDGREEN_AGGREGATE_HPP_
#define FEDGREEN_AGGREGATE_HPP_

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "fedgreen/codec.hpp"
#include "fedgreen/errors.hpp"
#include "fedgreen/grad.hpp"

namespace fedgreen {

struct DeviceUpload {
  int device_id = 0;
  std::vector<CompressedGradient> blobs;  // one record per layer
  std::int64_t data_count = 1;
};

struct GlobalGradient {
  std::vector<GradientTensor> layers;
  /// Per layer, per entry: number of devices whose mask covered the entry.
  std::vector<std::vector<std::int32_t>> coverage;
};

/// Expands a kernel-level mask to per-entry coverage; each mask bit covers
/// its kernel's k*k block. Bias records are always fully covered.
inline std::vector<std::uint8_t> expand_kernel_mask(
    const std::vector<std::uint8_t>& mask, const LayerShape& shape) {
  std::vector<std::uint8_t> entries(
      static_cast<std::size_t>(shape.element_count()), 0);
  const int ksize = shape.kernel_size();
  for (std::size_t j = 0; j < mask.size(); ++j)
    if (mask[j])
      std::fill_n(entries.begin() + static_cast<std::ptrdiff_t>(j) * ksize,
                  ksize, static_cast<std::uint8_t>(1));
  return entries;
}

inline void require_matching_shape(const LayerShape& a, const LayerShape& b) {
  if (a.layer_id != b.layer_id || a.kind != b.kind || a.c_out != b.c_out ||
      a.c_in != b.c_in || a.k != b.k)
    throw DomainError("uploads disagree on the shape of layer " +
                      std::to_string(a.layer_id));
}

/// Element-wise data-weighted mean over the devices whose mask covers each
/// entry; uncovered entries are exactly 0. Uploads are processed in
/// ascending (device_id, input position) order regardless of input order, so
/// the result is exactly permutation invariant. Accumulation is in 64-bit,
/// rounded once to 32-bit storage at the end.
inline GlobalGradient aggregate(const std::vector<DeviceUpload>& uploads) {
  if (uploads.empty()) throw DomainError("aggregate requires at least one upload");
  for (const auto& upload : uploads)
    if (upload.data_count <= 0)
      throw DomainError("upload data_count must be positive");

  std::vector<std::size_t> order(uploads.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (uploads[a].device_id != uploads[b].device_id)
      return uploads[a].device_id < uploads[b].device_id;
    return a < b;
  });

  const std::size_t layer_count = uploads[order[0]].blobs.size();
  for (const auto& upload : uploads)
    if (upload.blobs.size() != layer_count)
      throw DomainError("uploads disagree on the number of layers");

  GlobalGradient out;
  out.layers.reserve(layer_count);
  out.coverage.reserve(layer_count);

  for (std::size_t l = 0; l < layer_count; ++l) {
    const LayerShape& shape = uploads[order[0]].blobs[l].shape;
    const std::size_t n = static_cast<std::size_t>(shape.element_count());
    std::vector<double> numerator(n, 0.0);
    std::vector<double> denominator(n, 0.0);
    std::vector<std::int32_t> coverage(n, 0);

    for (std::size_t pos : order) {
      const DeviceUpload& upload = uploads[pos];
      const CompressedGradient& blob = upload.blobs[l];
      require_matching_shape(shape, blob.shape);
      const GradientTensor tensor = decode(blob);
      const std::vector<std::uint8_t> covered =
          expand_kernel_mask(blob.mask, blob.shape);
      const double weight = static_cast<double>(upload.data_count);
      for (std::size_t e = 0; e < n; ++e) {
        if (!covered[e]) continue;
        numerator[e] += weight * static_cast<double>(tensor.values[e]);
        denominator[e] += weight;
        ++coverage[e];
      }
    }

    GradientTensor merged = GradientTensor::zeros(shape);
    for (std::size_t e = 0; e < n; ++e)
      if (denominator[e] > 0.0)
        merged.values[e] = static_cast<float>(numerator[e] / denominator[e]);
    out.layers.push_back(std::move(merged));
    out.coverage.push_back(std::move(coverage));
  }
  return out;
}

/// Brute-force reference: the literal per-entry weighted mean over dense
/// decoded gradients and per-entry masks. Matches aggregate bit-for-bit when
/// inputs are supplied in ascending device_id order (identical accumulation
/// order); aggregate's canonical reordering extends that to any order.
inline GlobalGradient aggregate_oracle(
    const std::vector<ModelGradient>& dense_gradients,
    const std::vector<std::vector<std::vector<std::uint8_t>>>& entry_masks,
    const std::vector<std::int64_t>& data_counts) {
  if (dense_gradients.empty())
    throw DomainError("aggregate_oracle requires at least one gradient");
  if (entry_masks.size() != dense_gradients.size() ||
      data_counts.size() != dense_gradients.size())
    throw DomainError("aggregate_oracle argument lengths differ");

  const std::size_t layer_count = dense_gradients[0].layers.size();
  GlobalGradient out;
  for (std::size_t l = 0; l < layer_count; ++l) {
    const LayerShape& shape = dense_gradients[0].layers[l].shape;
    const std::size_t n = static_cast<std::size_t>(shape.element_count());
    GradientTensor merged = GradientTensor::zeros(shape);
    std::vector<std::int32_t> coverage(n, 0);
    for (std::size_t e = 0; e < n; ++e) {
      double numerator = 0.0;
      double denominator = 0.0;
      for (std::size_t d = 0; d < dense_gradients.size(); ++d) {
        if (!entry_masks[d][l][e]) continue;
        const double weight = static_cast<double>(data_counts[d]);
        numerator +=
            weight * static_cast<double>(dense_gradients[d].layers[l].values[e]);
        denominator += weight;
        ++coverage[e];
      }
      merged.values[e] =
          denominator > 0.0 ? static_cast<float>(numerator / denominator) : 0.0f;
    }
    out.layers.push_back(std::move(merged));
    out.coverage.push_back(std::move(coverage));
  }
  return out;
}

}  // namespace fedgreen

#endif  // FEDGREEN_AGGREGATE_HPP_
