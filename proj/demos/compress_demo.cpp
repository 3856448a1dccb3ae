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
/// \brief Compresses a synthetic four-layer model at several target ratios
/// and prints achieved size, the analytic size bound, and the sparsification
/// error against its guarantee.

#include <cmath>
#include <cstdio>

#include "fedgreen/codec.hpp"
#include "fedgreen/grad.hpp"

using namespace fedgreen;

int main() {
  const std::vector<LayerShape> shapes = {
      {0, LayerKind::conv, 8, 4, 3},
      {1, LayerKind::bias, 8, 1, 1},
      {2, LayerKind::fully_connected, 10, 128, 1},
      {3, LayerKind::bias, 10, 1, 1},
  };
  const ModelGradient model = synthesize_model(shapes, 42, 1);
  const std::int64_t raw_bits = total_bits_uncompressed(model);
  std::printf("uncompressed: %lld bits\n", static_cast<long long>(raw_bits));

  for (double alpha : {2.0, 4.0, 8.0, 16.0}) {
    const CompressedModel out = compress_model(model, alpha, CompressionConfig{}, 7);
    const std::vector<std::uint8_t> wire = serialize_model(out.layers);

    // The payload bound covers weight records; bias records are raw floats.
    std::int64_t bound = 0;
    std::int64_t payload = 0;
    double worst_ratio = 0.0;
    for (std::size_t l = 0; l < out.layers.size(); ++l) {
      const LayerShape& shape = shapes[l];
      if (shape.kind == LayerKind::bias) continue;
      bound += compressed_bits_bound(shape, out.pruning_rate,
                                     shape.kind == LayerKind::conv ? 8 : 4);
      payload += out.layers[l].bits.payload();
      // Lemma check: squared sparsification error stays under rho * ||v||^2.
      const SparsifyResult sparse = sparsify(model.layers[l], out.pruning_rate);
      const GradientTensor kept =
          reconstruct_sparse(sparse.kept_values, sparse.mask, shape);
      double err2 = 0.0;
      double norm2 = 0.0;
      for (std::size_t i = 0; i < model.layers[l].values.size(); ++i) {
        const double v = model.layers[l].values[i];
        const double d = v - kept.values[i];
        err2 += d * d;
        norm2 += v * v;
      }
      if (norm2 > 0.0) worst_ratio = std::max(worst_ratio, err2 / norm2);
    }

    std::printf(
        "alpha=%5.1f  rho=%.4f%s  wire=%6zu bits  weight payload=%6lld bits "
        "(bound %6lld)  err^2/|v|^2=%.4f (<= rho)\n",
        alpha, out.pruning_rate, out.rate_clamped ? " (clamped)" : "",
        wire.size() * 8, static_cast<long long>(payload),
        static_cast<long long>(bound), worst_ratio);
  }
  return 0;
}
