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

/// \file grad.hpp
/// \brief Gradient tensors, layer shapes, and the seeded synthetic generator.

#ifndef FEDGREEN_GRAD_HPP_
#define FEDGREEN_GRAD_HPP_

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedgreen/errors.hpp"
#include "fedgreen/prng.hpp"

namespace fedgreen {

enum class LayerKind : std::uint8_t {
  conv = 0,
  fully_connected = 1,
  bias = 2,
};

inline const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::fully_connected: return "fully_connected";
    case LayerKind::bias: return "bias";
  }
  return "unknown";
}

/// Geometry of one layer's gradient block. Fully-connected weights are a
/// c_out x c_in grid of 1x1 kernels; bias vectors use c_in = k = 1.
struct LayerShape {
  int layer_id = 0;
  LayerKind kind = LayerKind::conv;
  int c_out = 0;
  int c_in = 0;
  int k = 0;

  std::int64_t kernel_count() const {
    return static_cast<std::int64_t>(c_out) * c_in;
  }
  int kernel_size() const { return k * k; }
  std::int64_t element_count() const {
    return static_cast<std::int64_t>(c_out) * c_in * k * k;
  }
};

/// Field ranges mirror the wire header widths (16/16/8 bits) so any valid
/// in-memory shape is serializable.
inline void validate_shape(const LayerShape& s) {
  if (s.layer_id < 0 || s.layer_id > 0xffff)
    throw DomainError("layer_id must be in [0, 65535], got " +
                      std::to_string(s.layer_id));
  if (s.c_out <= 0 || s.c_out > 0xffff)
    throw DomainError("c_out must be in [1, 65535], got " +
                      std::to_string(s.c_out));
  if (s.c_in <= 0 || s.c_in > 0xffff)
    throw DomainError("c_in must be in [1, 65535], got " +
                      std::to_string(s.c_in));
  if (s.k <= 0 || s.k > 0xff)
    throw DomainError("k must be in [1, 255], got " + std::to_string(s.k));
  if (s.kind == LayerKind::fully_connected && s.k != 1)
    throw DomainError("fully_connected layers require k = 1");
  if (s.kind == LayerKind::bias && (s.c_in != 1 || s.k != 1))
    throw DomainError("bias layers require c_in = 1 and k = 1");
}

/// Flat layout is c_out-major, then c_in, then kernel row, then column; one
/// kernel's k*k entries are therefore contiguous, which is what kernel-wise
/// sparsification slices on.
inline std::int64_t flat_index(const LayerShape& s, int o, int i, int r, int c) {
  if (o < 0 || o >= s.c_out || i < 0 || i >= s.c_in || r < 0 || r >= s.k ||
      c < 0 || c >= s.k)
    throw std::out_of_range("flat_index: coordinate outside layer shape");
  return ((static_cast<std::int64_t>(o) * s.c_in + i) * s.k + r) * s.k + c;
}

struct GradientTensor {
  LayerShape shape;
  std::vector<float> values;

  static GradientTensor zeros(const LayerShape& shape) {
    validate_shape(shape);
    return {shape, std::vector<float>(
                       static_cast<std::size_t>(shape.element_count()), 0.0f)};
  }
};

inline void validate_tensor(const GradientTensor& g) {
  validate_shape(g.shape);
  if (static_cast<std::int64_t>(g.values.size()) != g.shape.element_count())
    throw DomainError("tensor holds " + std::to_string(g.values.size()) +
                      " values, shape requires " +
                      std::to_string(g.shape.element_count()));
  for (float v : g.values)
    if (!std::isfinite(v)) throw DomainError("tensor contains non-finite values");
}

/// One device's full gradient for a round plus the sample count behind it.
struct ModelGradient {
  std::vector<GradientTensor> layers;
  std::int64_t data_count = 1;
};

inline void validate_model(const ModelGradient& m) {
  if (m.data_count <= 0) throw DomainError("data_count must be positive");
  int last_id = -1;
  for (const auto& layer : m.layers) {
    validate_tensor(layer);
    if (layer.shape.layer_id <= last_id)
      throw DomainError("layer_ids must be unique and ascending");
    last_id = layer.shape.layer_id;
  }
}

struct SyntheticGradientSpec {
  std::uint64_t seed = 0;
  double kernel_scale_spread = 100.0;
};

/// Draws zero-mean per-kernel Gaussians whose standard deviations are
/// log-spaced across [1, kernel_scale_spread], so kernel norms differ and
/// norm-ranked pruning has real work to do. Stream is keyed by
/// (seed, layer_id): layers may be generated in any order or concurrently.
inline GradientTensor generate_synthetic(const LayerShape& shape,
                                         const SyntheticGradientSpec& spec) {
  validate_shape(shape);
  if (!(spec.kernel_scale_spread >= 1.0))
    throw DomainError("kernel_scale_spread must be >= 1");
  Rng rng(derive_stream(spec.seed, static_cast<std::uint64_t>(shape.layer_id)));
  GradientTensor out = GradientTensor::zeros(shape);
  const std::int64_t kernels = shape.kernel_count();
  std::size_t pos = 0;
  for (std::int64_t j = 0; j < kernels; ++j) {
    const double exponent = kernels > 1 ? static_cast<double>(j) / (kernels - 1)
                                        : 0.0;
    const double sigma = std::pow(spec.kernel_scale_spread, exponent);
    for (int e = 0; e < shape.kernel_size(); ++e)
      out.values[pos++] = static_cast<float>(sigma * rng.normal());
  }
  return out;
}

/// 32 bits per value, all layers included.
inline std::int64_t total_bits_uncompressed(const ModelGradient& m) {
  std::int64_t n = 0;
  for (const auto& layer : m.layers) n += layer.shape.element_count();
  return 32 * n;
}

/// Convenience used by tests and the simulator: a full synthetic model over
/// the given shapes.
inline ModelGradient synthesize_model(const std::vector<LayerShape>& shapes,
                                      std::uint64_t seed,
                                      std::int64_t data_count,
                                      double kernel_scale_spread = 100.0) {
  ModelGradient m;
  m.data_count = data_count;
  m.layers.reserve(shapes.size());
  for (const auto& shape : shapes)
    m.layers.push_back(generate_synthetic(shape, {seed, kernel_scale_spread}));
  validate_model(m);
  return m;
}

}  // namespace fedgreen

#endif  // FEDGREEN_GRAD_HPP_
