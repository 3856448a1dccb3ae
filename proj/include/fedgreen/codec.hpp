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

/// \file codec.hpp
/// \brief Three-stage gradient compression: kernel-wise sparsification,
/// stochastic quantization, lossless encoding — plus the inverse path and
/// exact bit accounting.
///
/// Wire format (LSB-first bit order, see bitstream.hpp), one record per
/// layer:
///
///   header (112 bits):
///     magic            8   0xA7
///     layer_id        16
///     kind             2   0 conv, 1 fully_connected, 2 bias
///     c_out           16
///     c_in            16
///     k                8
///     levels           8   0 for bias records (raw pass-through)
///     mask flag        1   0 bitmap, 1 index list
///     index flag       1   0 Huffman, 1 fixed width
///     reserved         4   must be zero
///     kept kernels    32
///   mask payload         bitmap: one bit per kernel, ascending kernel index;
///                        index list: kept ascending kernel indices, each
///                        bit_width(kernel_count-1) bits
///   Huffman table        levels x 5-bit code lengths (only when index flag=0)
///   sign bits            one per kept element, 1 = negative
///   abs_min              IEEE-754 binary32
///   abs_max              IEEE-754 binary32
///   index payload        fixed width log2(levels) bits each, or canonical
///                        Huffman codes written MSB-first
///   zero padding         to the next byte boundary
///
/// Bias records carry c_out raw binary32 values after the header instead of
/// the mask/table/sign/extreme/index sections.

#ifndef FEDGREEN_CODEC_HPP_
#define FEDGREEN_CODEC_HPP_

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "fedgreen/bitstream.hpp"
#include "fedgreen/errors.hpp"
#include "fedgreen/grad.hpp"
#include "fedgreen/prng.hpp"

namespace fedgreen {

inline constexpr std::uint8_t kWireMagic = 0xA7;
inline constexpr int kHeaderBits = 112;
inline constexpr int kMaxLevels = 128;
inline constexpr int kMaxHuffmanCodeLength = 31;
inline constexpr int kLengthFieldBits = 5;
/// Pruning rates are kept strictly below 1 so at least one kernel survives.
inline constexpr double kMaxPruningRate = 1.0 - 1e-6;

// ---------------------------------------------------------------------------
// Sparsification
// ---------------------------------------------------------------------------

struct SparsifyResult {
  std::vector<std::uint8_t> mask;  // one entry per kernel, 1 = kept
  std::vector<float> kept_values;  // surviving kernels, ascending, row-major
  std::int64_t pruned_count = 0;
};

/// floor(rate * kernels) with a few-ulp guard: products like 0.3 * 10 land
/// one representation step below the exact integer and must still floor to
/// it. The guard never fires on genuinely fractional products.
inline std::int64_t pruned_kernel_count(double pruning_rate,
                                        std::int64_t kernels) {
  const double x = pruning_rate * static_cast<double>(kernels);
  const double nearest = std::nearbyint(x);
  const double tol =
      8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, x);
  std::int64_t pruned = (std::abs(x - nearest) <= tol)
                            ? static_cast<std::int64_t>(nearest)
                            : static_cast<std::int64_t>(std::floor(x));
  return std::clamp<std::int64_t>(pruned, 0, kernels - 1);
}

/// Zeroes the pruned_kernel_count(rho, c_out*c_in) kernels with smallest L2
/// norm; equal norms are pruned by ascending kernel index so bitstreams are
/// reproducible.
inline SparsifyResult sparsify(const GradientTensor& tensor,
                               double pruning_rate) {
  validate_tensor(tensor);
  if (!(pruning_rate >= 0.0 && pruning_rate < 1.0))
    throw DomainError("pruning rate must lie in [0, 1), got " +
                      std::to_string(pruning_rate));
  const LayerShape& shape = tensor.shape;
  const std::int64_t kernels = shape.kernel_count();
  const int ksize = shape.kernel_size();

  std::vector<std::pair<double, std::int64_t>> norms(
      static_cast<std::size_t>(kernels));
  for (std::int64_t j = 0; j < kernels; ++j) {
    double sum_sq = 0.0;
    const std::size_t base = static_cast<std::size_t>(j) * ksize;
    for (int e = 0; e < ksize; ++e) {
      const double v = tensor.values[base + e];
      sum_sq += v * v;
    }
    norms[static_cast<std::size_t>(j)] = {sum_sq, j};
  }
  std::sort(norms.begin(), norms.end());

  SparsifyResult out;
  out.pruned_count = pruned_kernel_count(pruning_rate, kernels);
  out.mask.assign(static_cast<std::size_t>(kernels), 1);
  for (std::int64_t p = 0; p < out.pruned_count; ++p)
    out.mask[static_cast<std::size_t>(norms[static_cast<std::size_t>(p)].second)] = 0;

  out.kept_values.reserve(
      static_cast<std::size_t>((kernels - out.pruned_count) * ksize));
  for (std::int64_t j = 0; j < kernels; ++j) {
    if (!out.mask[static_cast<std::size_t>(j)]) continue;
    const std::size_t base = static_cast<std::size_t>(j) * ksize;
    out.kept_values.insert(out.kept_values.end(),
                           tensor.values.begin() + base,
                           tensor.values.begin() + base + ksize);
  }
  return out;
}

/// Inverse of the slicing step: zero where the mask is 0, kept values placed
/// back in flat order where it is 1.
inline GradientTensor reconstruct_sparse(const std::vector<float>& kept_values,
                                         const std::vector<std::uint8_t>& mask,
                                         const LayerShape& shape) {
  validate_shape(shape);
  const std::int64_t kernels = shape.kernel_count();
  const int ksize = shape.kernel_size();
  if (static_cast<std::int64_t>(mask.size()) != kernels)
    throw FormatError("mask size does not match kernel count", 0);
  std::int64_t kept = 0;
  for (std::uint8_t m : mask) kept += m ? 1 : 0;
  if (static_cast<std::int64_t>(kept_values.size()) != kept * ksize)
    throw FormatError("kept value count does not match mask population", 0);

  GradientTensor out = GradientTensor::zeros(shape);
  std::size_t src = 0;
  for (std::int64_t j = 0; j < kernels; ++j) {
    if (!mask[static_cast<std::size_t>(j)]) continue;
    const std::size_t base = static_cast<std::size_t>(j) * ksize;
    for (int e = 0; e < ksize; ++e) out.values[base + e] = kept_values[src++];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stochastic quantization
// ---------------------------------------------------------------------------

struct QuantizedResult {
  std::vector<std::uint8_t> indices;  // per kept element, in [0, levels)
  std::vector<std::int8_t> signs;     // per kept element, -1 or +1
  float abs_min = 0.0f;
  float abs_max = 0.0f;
  int levels = 0;
};

/// Grid magnitude for one level index. Encoder and decoder both use this
/// function, so reconstructions are bit-identical on both sides. Index 0 and
/// levels-1 return the stored extremes exactly.
inline float dequantize_level(float abs_min, float abs_max, int levels,
                              int index) {
  if (index <= 0) return abs_min;
  if (index >= levels - 1) return abs_max;
  const double step =
      (static_cast<double>(abs_max) - static_cast<double>(abs_min)) /
      (levels - 1);
  double mag = static_cast<double>(abs_min) + step * index;
  if (mag > static_cast<double>(abs_max)) mag = static_cast<double>(abs_max);
  return static_cast<float>(mag);
}

/// Maps each magnitude onto the L-level grid spanning [min|v|, max|v|] with
/// spacing delta/(levels-1). A magnitude strictly between two grid points
/// rounds up with probability (mag - lower)/step, so the expected
/// reconstruction equals the input. Grid points (and the degenerate
/// delta = 0 case) quantize exactly. sign(0) is +1.
inline QuantizedResult quantize(const std::vector<float>& kept_values,
                                int levels, std::uint64_t seed) {
  if (kept_values.empty())
    throw DomainError("quantize requires at least one kept value");
  if (levels < 2 || levels > kMaxLevels)
    throw DomainError("levels must lie in [2, " + std::to_string(kMaxLevels) +
                      "], got " + std::to_string(levels));
  for (float v : kept_values)
    if (!std::isfinite(v)) throw DomainError("non-finite value in quantize input");

  QuantizedResult q;
  q.levels = levels;
  float lo = std::fabs(kept_values[0]);
  float hi = lo;
  for (float v : kept_values) {
    const float a = std::fabs(v);
    lo = std::min(lo, a);
    hi = std::max(hi, a);
  }
  q.abs_min = lo;
  q.abs_max = hi;

  const double step =
      (static_cast<double>(hi) - static_cast<double>(lo)) / (levels - 1);
  Rng rng(seed);
  q.indices.reserve(kept_values.size());
  q.signs.reserve(kept_values.size());
  for (float v : kept_values) {
    const double mag = std::fabs(static_cast<double>(v));
    int index = 0;
    if (step > 0.0) {
      const double offset = (mag - static_cast<double>(lo)) / step;
      const std::int64_t lower = static_cast<std::int64_t>(std::floor(offset));
      if (lower >= levels - 1) {
        index = levels - 1;
      } else if (lower < 0) {
        index = 0;
      } else {
        const double frac = offset - static_cast<double>(lower);
        index = static_cast<int>(lower) + (rng.uniform() < frac ? 1 : 0);
      }
    }
    q.indices.push_back(static_cast<std::uint8_t>(index));
    q.signs.push_back(v < 0.0f ? -1 : 1);
  }
  return q;
}

/// Reconstructed signed values for one quantized block, in kept order.
inline std::vector<float> dequantize(const QuantizedResult& q) {
  if (q.indices.size() != q.signs.size())
    throw DomainError("quantized index/sign length mismatch");
  std::vector<float> out;
  out.reserve(q.indices.size());
  for (std::size_t i = 0; i < q.indices.size(); ++i) {
    const float mag =
        dequantize_level(q.abs_min, q.abs_max, q.levels, q.indices[i]);
    out.push_back(q.signs[i] < 0 ? -mag : mag);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Canonical Huffman coding
// ---------------------------------------------------------------------------

/// Code lengths from symbol frequencies. Merging always takes the two nodes
/// with smallest (weight, creation order), which pins tie-breaking and makes
/// lengths platform-independent. Returns an empty vector when any code would
/// exceed kMaxHuffmanCodeLength (caller falls back to fixed width).
inline std::vector<std::uint8_t> huffman_code_lengths(
    const std::vector<std::int64_t>& freq) {
  struct Node {
    std::int64_t weight;
    int order;
    int left;
    int right;
    int symbol;
  };
  std::vector<Node> nodes;
  std::vector<int> active;
  for (std::size_t s = 0; s < freq.size(); ++s) {
    if (freq[s] <= 0) continue;
    active.push_back(static_cast<int>(nodes.size()));
    nodes.push_back({freq[s], static_cast<int>(nodes.size()), -1, -1,
                     static_cast<int>(s)});
  }
  std::vector<std::uint8_t> lengths(freq.size(), 0);
  if (nodes.empty()) return lengths;
  if (nodes.size() == 1) {
    lengths[static_cast<std::size_t>(nodes[0].symbol)] = 1;
    return lengths;
  }

  auto better = [&](int a, int b) {
    if (nodes[a].weight != nodes[b].weight)
      return nodes[a].weight < nodes[b].weight;
    return nodes[a].order < nodes[b].order;
  };
  while (active.size() > 1) {
    std::size_t i0 = 0;
    for (std::size_t i = 1; i < active.size(); ++i)
      if (better(active[i], active[i0])) i0 = i;
    const int first = active[i0];
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(i0));
    std::size_t i1 = 0;
    for (std::size_t i = 1; i < active.size(); ++i)
      if (better(active[i], active[i1])) i1 = i;
    const int second = active[i1];
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(i1));
    active.push_back(static_cast<int>(nodes.size()));
    nodes.push_back({nodes[first].weight + nodes[second].weight,
                     static_cast<int>(nodes.size()), first, second, -1});
  }

  // Depth-first walk assigning depths as lengths.
  std::vector<std::pair<int, int>> stack{{active[0], 0}};
  while (!stack.empty()) {
    const auto [id, depth] = stack.back();
    stack.pop_back();
    if (nodes[static_cast<std::size_t>(id)].symbol >= 0) {
      if (depth > kMaxHuffmanCodeLength) return {};
      lengths[static_cast<std::size_t>(
          nodes[static_cast<std::size_t>(id)].symbol)] =
          static_cast<std::uint8_t>(depth);
      continue;
    }
    stack.push_back({nodes[static_cast<std::size_t>(id)].left, depth + 1});
    stack.push_back({nodes[static_cast<std::size_t>(id)].right, depth + 1});
  }
  return lengths;
}

struct CanonicalCodes {
  std::vector<std::uint32_t> codes;    // per symbol; valid where length > 0
  std::vector<std::uint8_t> lengths;   // per symbol
};

/// Canonical assignment: symbols ordered by (length, symbol) receive
/// consecutive code values per length. Throws FormatError when the length
/// multiset is overfull (not prefix-decodable); underfull tables are legal
/// (the single-symbol case uses length 1 and half the code space).
inline CanonicalCodes canonical_from_lengths(
    const std::vector<std::uint8_t>& lengths, std::size_t error_offset = 0) {
  CanonicalCodes result;
  result.lengths = lengths;
  result.codes.assign(lengths.size(), 0);

  std::uint32_t count[kMaxHuffmanCodeLength + 1] = {};
  for (std::uint8_t len : lengths) {
    if (len > kMaxHuffmanCodeLength)
      throw FormatError("Huffman code length out of range", error_offset);
    if (len > 0) ++count[len];
  }
  std::uint32_t code = 0;
  std::uint32_t next_code[kMaxHuffmanCodeLength + 1] = {};
  for (int len = 1; len <= kMaxHuffmanCodeLength; ++len) {
    code = (code + count[len - 1]) << 1;
    // Codes of length len occupy [code, code + count[len]); all must fit in
    // len bits or the table is not prefix-decodable.
    if (static_cast<std::uint64_t>(code) + count[len] > (1ULL << len))
      throw FormatError("overfull Huffman code-length table", error_offset);
    next_code[len] = code;
  }
  for (std::size_t s = 0; s < lengths.size(); ++s)
    if (lengths[s] > 0) result.codes[s] = next_code[lengths[s]]++;
  return result;
}

/// Incremental canonical decoder table.
struct HuffmanDecoder {
  std::uint32_t first_code[kMaxHuffmanCodeLength + 1] = {};
  std::uint32_t count[kMaxHuffmanCodeLength + 1] = {};
  std::uint32_t first_index[kMaxHuffmanCodeLength + 1] = {};
  std::vector<int> symbols;  // sorted by (length, symbol)

  explicit HuffmanDecoder(const std::vector<std::uint8_t>& lengths,
                          std::size_t error_offset = 0) {
    (void)canonical_from_lengths(lengths, error_offset);  // overfull check
    for (std::uint8_t len : lengths)
      if (len > 0) ++count[len];
    std::uint32_t code = 0;
    std::uint32_t index = 0;
    for (int len = 1; len <= kMaxHuffmanCodeLength; ++len) {
      code = (code + count[len - 1]) << 1;
      first_code[len] = code;
      first_index[len] = index;
      index += count[len];
    }
    symbols.reserve(index);
    for (int len = 1; len <= kMaxHuffmanCodeLength; ++len)
      for (std::size_t s = 0; s < lengths.size(); ++s)
        if (lengths[s] == len) symbols.push_back(static_cast<int>(s));
  }

  int decode_symbol(BitReader& reader) const {
    std::uint32_t code = 0;
    for (int len = 1; len <= kMaxHuffmanCodeLength; ++len) {
      code = (code << 1) | (reader.read_bit() ? 1u : 0u);
      if (count[len] != 0 && code >= first_code[len] &&
          code - first_code[len] < count[len])
        return symbols[first_index[len] + (code - first_code[len])];
    }
    throw FormatError("invalid Huffman code", reader.byte_offset());
  }
};

// ---------------------------------------------------------------------------
// Encoded records
// ---------------------------------------------------------------------------

struct SectionBits {
  std::int64_t header = 0;
  std::int64_t mask = 0;
  std::int64_t table = 0;
  std::int64_t signs = 0;
  std::int64_t extremes = 0;
  std::int64_t indices = 0;
  std::int64_t raw = 0;      // bias pass-through values
  std::int64_t padding = 0;

  /// Everything except framing: the quantity bounded by the closed-form
  /// budget (mask + table + signs + extremes + indices + raw).
  std::int64_t payload() const {
    return mask + table + signs + extremes + indices + raw;
  }
  std::int64_t total() const { return header + payload() + padding; }
};

struct CompressedGradient {
  LayerShape shape;
  int levels = 0;                  // 0 on bias records
  bool mask_as_index_list = false;
  bool indices_fixed_width = false;
  std::vector<std::uint8_t> mask;  // decoded kernel mask, 1 = kept
  QuantizedResult quantized;       // weight records
  std::vector<float> raw_values;   // bias records
  SectionBits bits;

  std::int64_t kept_kernels() const {
    std::int64_t kept = 0;
    for (std::uint8_t m : mask) kept += m ? 1 : 0;
    return kept;
  }
};

inline int fixed_index_width(int levels) {
  return std::max(1, static_cast<int>(std::bit_width(static_cast<unsigned>(levels - 1))));
}

inline int mask_list_index_width(std::int64_t kernels) {
  return std::max(1, static_cast<int>(std::bit_width(static_cast<std::uint64_t>(
                         kernels > 1 ? kernels - 1 : 1))));
}

inline void require_power_of_two_levels(int levels) {
  if (levels < 2 || levels > kMaxLevels ||
      !std::has_single_bit(static_cast<unsigned>(levels)))
    throw DomainError("levels must be a power of two in [2, " +
                      std::to_string(kMaxLevels) + "], got " +
                      std::to_string(levels));
}

/// Chooses the cheaper mask and index encodings, fills in exact per-section
/// bit counts, and returns the assembled record. Payload is guaranteed not
/// to exceed the closed-form budget: the bitmap term caps the mask, the
/// fixed-width term caps the indices, and Huffman is only taken when
/// strictly smaller including its table.
inline CompressedGradient encode(const LayerShape& shape,
                                 const std::vector<std::uint8_t>& mask,
                                 const QuantizedResult& quantized) {
  validate_shape(shape);
  if (shape.kind == LayerKind::bias)
    throw DomainError("bias layers use encode_bias");
  require_power_of_two_levels(quantized.levels);
  const std::int64_t kernels = shape.kernel_count();
  if (static_cast<std::int64_t>(mask.size()) != kernels)
    throw DomainError("mask size does not match kernel count");
  std::int64_t kept = 0;
  for (std::uint8_t m : mask) kept += m ? 1 : 0;
  const std::int64_t element_count = kept * shape.kernel_size();
  if (static_cast<std::int64_t>(quantized.indices.size()) != element_count ||
      static_cast<std::int64_t>(quantized.signs.size()) != element_count)
    throw DomainError("quantized payload does not match mask population");
  for (std::uint8_t idx : quantized.indices)
    if (idx >= quantized.levels)
      throw DomainError("quantized index exceeds level count");

  CompressedGradient out;
  out.shape = shape;
  out.levels = quantized.levels;
  out.mask = mask;
  out.quantized = quantized;

  const int list_width = mask_list_index_width(kernels);
  const std::int64_t bitmap_bits = kernels;
  const std::int64_t list_bits = kept * list_width;
  out.mask_as_index_list = list_bits < bitmap_bits;

  const int fixed_width = fixed_index_width(quantized.levels);
  const std::int64_t fixed_bits = element_count * fixed_width;
  std::int64_t huffman_bits = std::numeric_limits<std::int64_t>::max();
  std::vector<std::uint8_t> lengths;
  if (element_count > 0) {
    std::vector<std::int64_t> freq(static_cast<std::size_t>(quantized.levels), 0);
    for (std::uint8_t idx : quantized.indices) ++freq[idx];
    lengths = huffman_code_lengths(freq);
    if (!lengths.empty()) {
      std::int64_t code_bits = 0;
      for (std::size_t s = 0; s < freq.size(); ++s)
        code_bits += freq[s] * lengths[s];
      huffman_bits = quantized.levels * kLengthFieldBits + code_bits;
    }
  }
  out.indices_fixed_width = !(huffman_bits < fixed_bits);

  out.bits.header = kHeaderBits;
  out.bits.mask = out.mask_as_index_list ? list_bits : bitmap_bits;
  out.bits.table =
      out.indices_fixed_width ? 0 : quantized.levels * kLengthFieldBits;
  out.bits.signs = element_count;
  out.bits.extremes = 64;
  out.bits.indices =
      out.indices_fixed_width ? fixed_bits : (huffman_bits - out.bits.table);
  const std::int64_t unpadded = out.bits.header + out.bits.payload();
  out.bits.padding = (8 - unpadded % 8) % 8;
  return out;
}

/// Bias pass-through: c_out raw 32-bit values, counted in size accounting.
inline CompressedGradient encode_bias(const GradientTensor& tensor) {
  validate_tensor(tensor);
  if (tensor.shape.kind != LayerKind::bias)
    throw DomainError("encode_bias requires a bias layer");
  CompressedGradient out;
  out.shape = tensor.shape;
  out.levels = 0;
  out.mask.assign(static_cast<std::size_t>(tensor.shape.c_out), 1);
  out.raw_values = tensor.values;
  out.bits.header = kHeaderBits;
  out.bits.raw = 32 * static_cast<std::int64_t>(tensor.values.size());
  out.bits.padding = (8 - (out.bits.header + out.bits.raw) % 8) % 8;
  return out;
}

/// Exact reconstruction of the sparse quantized tensor the encoder held.
inline GradientTensor decode(const CompressedGradient& blob) {
  if (blob.shape.kind == LayerKind::bias) {
    GradientTensor out = GradientTensor::zeros(blob.shape);
    if (blob.raw_values.size() != out.values.size())
      throw FormatError("bias record value count mismatch", 0);
    out.values = blob.raw_values;
    return out;
  }
  return reconstruct_sparse(dequantize(blob.quantized), blob.mask, blob.shape);
}

// ---------------------------------------------------------------------------
// Wire serialization
// ---------------------------------------------------------------------------

inline void serialize_record(const CompressedGradient& record, BitWriter& w) {
  validate_shape(record.shape);
  const bool is_bias = record.shape.kind == LayerKind::bias;
  const std::int64_t kept = is_bias ? record.shape.c_out : record.kept_kernels();

  w.write_bits(kWireMagic, 8);
  w.write_bits(static_cast<std::uint64_t>(record.shape.layer_id), 16);
  w.write_bits(static_cast<std::uint64_t>(record.shape.kind), 2);
  w.write_bits(static_cast<std::uint64_t>(record.shape.c_out), 16);
  w.write_bits(static_cast<std::uint64_t>(record.shape.c_in), 16);
  w.write_bits(static_cast<std::uint64_t>(record.shape.k), 8);
  w.write_bits(static_cast<std::uint64_t>(record.levels), 8);
  w.write_bit(record.mask_as_index_list);
  w.write_bit(record.indices_fixed_width);
  w.write_bits(0, 4);
  w.write_bits(static_cast<std::uint64_t>(kept), 32);

  if (is_bias) {
    for (float v : record.raw_values) w.write_f32(v);
    w.align_to_byte();
    return;
  }

  const std::int64_t kernels = record.shape.kernel_count();
  if (record.mask_as_index_list) {
    const int width = mask_list_index_width(kernels);
    for (std::int64_t j = 0; j < kernels; ++j)
      if (record.mask[static_cast<std::size_t>(j)])
        w.write_bits(static_cast<std::uint64_t>(j), width);
  } else {
    for (std::int64_t j = 0; j < kernels; ++j)
      w.write_bit(record.mask[static_cast<std::size_t>(j)] != 0);
  }

  CanonicalCodes codes;
  if (!record.indices_fixed_width) {
    std::vector<std::int64_t> freq(static_cast<std::size_t>(record.levels), 0);
    for (std::uint8_t idx : record.quantized.indices) ++freq[idx];
    const std::vector<std::uint8_t> lengths = huffman_code_lengths(freq);
    for (std::uint8_t len : lengths)
      w.write_bits(len, kLengthFieldBits);
    codes = canonical_from_lengths(lengths);
  }

  for (std::int8_t sign : record.quantized.signs) w.write_bit(sign < 0);
  w.write_f32(record.quantized.abs_min);
  w.write_f32(record.quantized.abs_max);

  if (record.indices_fixed_width) {
    const int width = fixed_index_width(record.levels);
    for (std::uint8_t idx : record.quantized.indices)
      w.write_bits(idx, width);
  } else {
    for (std::uint8_t idx : record.quantized.indices) {
      const std::uint32_t code = codes.codes[idx];
      const int len = codes.lengths[idx];
      for (int bit = len - 1; bit >= 0; --bit)
        w.write_bit(((code >> bit) & 1u) != 0);
    }
  }
  w.align_to_byte();
}

inline std::vector<std::uint8_t> serialize(const CompressedGradient& record) {
  BitWriter w;
  serialize_record(record, w);
  return w.take();
}

inline std::vector<std::uint8_t> serialize_model(
    const std::vector<CompressedGradient>& records) {
  BitWriter w;
  for (const auto& record : records) serialize_record(record, w);
  return w.take();
}

/// Parses one record. Every structural inconsistency raises FormatError with
/// the byte offset where parsing stopped; no partial record escapes.
inline CompressedGradient parse_record(BitReader& r) {
  const std::size_t start = r.byte_offset();
  if (r.remaining_bits() < kHeaderBits)
    throw FormatError("truncated record header", start);

  if (r.read_bits(8) != kWireMagic)
    throw FormatError("bad magic byte", start);
  CompressedGradient out;
  out.shape.layer_id = static_cast<int>(r.read_bits(16));
  const std::uint64_t kind_raw = r.read_bits(2);
  if (kind_raw > 2) throw FormatError("invalid layer kind", r.byte_offset());
  out.shape.kind = static_cast<LayerKind>(kind_raw);
  out.shape.c_out = static_cast<int>(r.read_bits(16));
  out.shape.c_in = static_cast<int>(r.read_bits(16));
  out.shape.k = static_cast<int>(r.read_bits(8));
  out.levels = static_cast<int>(r.read_bits(8));
  out.mask_as_index_list = r.read_bit();
  out.indices_fixed_width = r.read_bit();
  if (r.read_bits(4) != 0)
    throw FormatError("reserved header bits set", r.byte_offset());
  const std::int64_t kept = static_cast<std::int64_t>(r.read_bits(32));

  if (out.shape.c_out == 0 || out.shape.c_in == 0 || out.shape.k == 0)
    throw FormatError("degenerate layer shape", r.byte_offset());
  if (out.shape.kind == LayerKind::fully_connected && out.shape.k != 1)
    throw FormatError("fully-connected record requires k = 1", r.byte_offset());
  if (out.shape.kind == LayerKind::bias &&
      (out.shape.c_in != 1 || out.shape.k != 1))
    throw FormatError("bias record requires c_in = k = 1", r.byte_offset());

  out.bits.header = kHeaderBits;

  if (out.shape.kind == LayerKind::bias) {
    if (out.levels != 0)
      throw FormatError("bias record requires levels = 0", r.byte_offset());
    if (out.mask_as_index_list || out.indices_fixed_width)
      throw FormatError("bias record requires clear payload flags",
                        r.byte_offset());
    if (kept != out.shape.c_out)
      throw FormatError("bias record kept count must equal c_out",
                        r.byte_offset());
    out.mask.assign(static_cast<std::size_t>(out.shape.c_out), 1);
    out.raw_values.reserve(static_cast<std::size_t>(out.shape.c_out));
    for (int i = 0; i < out.shape.c_out; ++i) {
      const float v = r.read_f32();
      if (!std::isfinite(v))
        throw FormatError("non-finite bias value", r.byte_offset());
      out.raw_values.push_back(v);
    }
    out.bits.raw = 32 * static_cast<std::int64_t>(out.shape.c_out);
    const std::size_t before_pad = r.bit_pos();
    r.align_to_byte();
    out.bits.padding = static_cast<std::int64_t>(r.bit_pos() - before_pad);
    return out;
  }

  if (out.levels < 2 || out.levels > kMaxLevels ||
      !std::has_single_bit(static_cast<unsigned>(out.levels)))
    throw FormatError("invalid level count", r.byte_offset());
  const std::int64_t kernels = out.shape.kernel_count();
  if (kept > kernels)
    throw FormatError("kept-kernel count exceeds kernel count",
                      r.byte_offset());

  out.mask.assign(static_cast<std::size_t>(kernels), 0);
  if (out.mask_as_index_list) {
    const int width = mask_list_index_width(kernels);
    std::int64_t previous = -1;
    for (std::int64_t i = 0; i < kept; ++i) {
      const std::int64_t idx =
          static_cast<std::int64_t>(r.read_bits(width));
      if (idx <= previous || idx >= kernels)
        throw FormatError("mask index list not strictly ascending in range",
                          r.byte_offset());
      out.mask[static_cast<std::size_t>(idx)] = 1;
      previous = idx;
    }
    out.bits.mask = kept * width;
  } else {
    std::int64_t population = 0;
    for (std::int64_t j = 0; j < kernels; ++j) {
      const bool bit = r.read_bit();
      out.mask[static_cast<std::size_t>(j)] = bit ? 1 : 0;
      population += bit ? 1 : 0;
    }
    if (population != kept)
      throw FormatError("mask population does not match kept-kernel count",
                        r.byte_offset());
    out.bits.mask = kernels;
  }

  const std::int64_t element_count = kept * out.shape.kernel_size();

  std::vector<std::uint8_t> lengths;
  if (!out.indices_fixed_width) {
    lengths.reserve(static_cast<std::size_t>(out.levels));
    for (int s = 0; s < out.levels; ++s)
      lengths.push_back(
          static_cast<std::uint8_t>(r.read_bits(kLengthFieldBits)));
    bool any = false;
    for (std::uint8_t len : lengths) any = any || len > 0;
    if (!any && element_count > 0)
      throw FormatError("empty Huffman table with nonempty payload",
                        r.byte_offset());
    out.bits.table = out.levels * kLengthFieldBits;
  }

  out.quantized.levels = out.levels;
  out.quantized.signs.reserve(static_cast<std::size_t>(element_count));
  for (std::int64_t i = 0; i < element_count; ++i)
    out.quantized.signs.push_back(r.read_bit() ? -1 : 1);
  out.bits.signs = element_count;

  out.quantized.abs_min = r.read_f32();
  out.quantized.abs_max = r.read_f32();
  out.bits.extremes = 64;
  if (!std::isfinite(out.quantized.abs_min) ||
      !std::isfinite(out.quantized.abs_max) || out.quantized.abs_min < 0.0f ||
      out.quantized.abs_max < out.quantized.abs_min)
    throw FormatError("invalid magnitude extremes", r.byte_offset());

  out.quantized.indices.reserve(static_cast<std::size_t>(element_count));
  const std::size_t index_start = r.bit_pos();
  if (out.indices_fixed_width) {
    const int width = fixed_index_width(out.levels);
    for (std::int64_t i = 0; i < element_count; ++i) {
      const std::uint64_t idx = r.read_bits(width);
      if (idx >= static_cast<std::uint64_t>(out.levels))
        throw FormatError("level index out of range", r.byte_offset());
      out.quantized.indices.push_back(static_cast<std::uint8_t>(idx));
    }
  } else {
    const HuffmanDecoder decoder(lengths, r.byte_offset());
    for (std::int64_t i = 0; i < element_count; ++i) {
      const int sym = decoder.decode_symbol(r);
      out.quantized.indices.push_back(static_cast<std::uint8_t>(sym));
    }
  }
  out.bits.indices = static_cast<std::int64_t>(r.bit_pos() - index_start);

  const std::size_t before_pad = r.bit_pos();
  r.align_to_byte();
  out.bits.padding = static_cast<std::int64_t>(r.bit_pos() - before_pad);
  return out;
}

inline CompressedGradient parse(const std::vector<std::uint8_t>& bytes) {
  BitReader r(bytes.data(), bytes.size());
  CompressedGradient out = parse_record(r);
  if (r.remaining_bits() != 0)
    throw FormatError("trailing bytes after record", r.byte_offset());
  return out;
}

inline std::vector<CompressedGradient> parse_model(
    const std::vector<std::uint8_t>& bytes) {
  if (bytes.empty()) throw FormatError("empty stream", 0);
  BitReader r(bytes.data(), bytes.size());
  std::vector<CompressedGradient> records;
  while (r.remaining_bits() > 0) records.push_back(parse_record(r));
  return records;
}

// ---------------------------------------------------------------------------
// Size accounting and ratio control
// ---------------------------------------------------------------------------

/// Closed-form payload budget for one weight layer: kernel bitmap, kept
/// elements at 1 sign + log2(levels) index bits each, and the two 32-bit
/// extremes. Framing (header, padding) is accounted separately.
inline std::int64_t compressed_bits_bound(const LayerShape& shape,
                                          double pruning_rate, int levels) {
  validate_shape(shape);
  require_power_of_two_levels(levels);
  if (!(pruning_rate >= 0.0 && pruning_rate < 1.0))
    throw DomainError("pruning rate must lie in [0, 1)");
  const std::int64_t kernels = shape.kernel_count();
  const std::int64_t kept = kernels - pruned_kernel_count(pruning_rate, kernels);
  const int log2_levels = fixed_index_width(levels);
  return kernels + kept * shape.kernel_size() * (1 + log2_levels) + 64;
}

struct CompressionConfig {
  int levels_conv = 8;
  int levels_fc = 4;
  double pruning_rate = 0.0;
};

inline void validate_compression_config(const CompressionConfig& c) {
  require_power_of_two_levels(c.levels_conv);
  require_power_of_two_levels(c.levels_fc);
  if (!(c.pruning_rate >= 0.0 && c.pruning_rate < 1.0))
    throw DomainError("pruning rate must lie in [0, 1)");
}

struct PruningRateResult {
  double pruning_rate = 0.0;
  bool clamped = false;  // requested ratio unreachable even at the rate cap
};

/// Inverts the summed per-layer budgets on their linear relaxation: with
/// fixed bits A (bitmaps + extremes + raw bias) and prunable bits
/// B = sum over weight layers of kernels * k^2 * (1 + log2 levels), the
/// budget at rate rho is A + (1 - rho) * B, so rho = 1 - (target - A)/B.
/// The result is clamped to [0, kMaxPruningRate]; ratios unreachable even
/// at the cap set the clamped flag.
inline PruningRateResult ratio_to_pruning_rate(
    const std::vector<LayerShape>& model_shapes, double alpha,
    const CompressionConfig& config) {
  if (!(alpha >= 1.0))
    throw DomainError("compression ratio must be >= 1, got " +
                      std::to_string(alpha));
  validate_compression_config(config);
  if (model_shapes.empty()) throw DomainError("model has no layers");

  double fixed_bits = 0.0;
  double prunable_bits = 0.0;
  double total_elements = 0.0;
  for (const auto& shape : model_shapes) {
    validate_shape(shape);
    total_elements += static_cast<double>(shape.element_count());
    if (shape.kind == LayerKind::bias) {
      fixed_bits += 32.0 * shape.c_out;
      continue;
    }
    const int levels = shape.kind == LayerKind::conv ? config.levels_conv
                                                     : config.levels_fc;
    fixed_bits += static_cast<double>(shape.kernel_count()) + 64.0;
    prunable_bits += static_cast<double>(shape.kernel_count()) *
                     shape.kernel_size() * (1 + fixed_index_width(levels));
  }

  const double target_bits = 32.0 * total_elements / alpha;
  PruningRateResult out;
  if (prunable_bits <= 0.0) {
    out.pruning_rate = 0.0;
    out.clamped = target_bits < fixed_bits;
    return out;
  }
  const double rate = 1.0 - (target_bits - fixed_bits) / prunable_bits;
  if (rate <= 0.0) {
    out.pruning_rate = 0.0;
  } else if (rate > kMaxPruningRate) {
    out.pruning_rate = kMaxPruningRate;
    out.clamped = true;
  } else {
    out.pruning_rate = rate;
  }
  return out;
}

struct CompressedModel {
  std::vector<CompressedGradient> layers;
  double achieved_alpha = 1.0;
  double pruning_rate = 0.0;
  bool rate_clamped = false;
};

/// Device-side pipeline: one shared pruning rate solved from the target
/// ratio, then per-layer sparsify/quantize/encode. Conv layers use
/// levels_conv, fully-connected layers levels_fc, bias layers pass through
/// raw. Quantizer streams are keyed by (seed, layer_id), so layer order or
/// concurrency cannot change the bitstream.
inline CompressedModel compress_model(const ModelGradient& model, double alpha,
                                      const CompressionConfig& config,
                                      std::uint64_t seed) {
  validate_model(model);
  std::vector<LayerShape> shapes;
  shapes.reserve(model.layers.size());
  for (const auto& layer : model.layers) shapes.push_back(layer.shape);

  const PruningRateResult rate = ratio_to_pruning_rate(shapes, alpha, config);
  CompressedModel out;
  out.pruning_rate = rate.pruning_rate;
  out.rate_clamped = rate.clamped;

  std::int64_t total_bits = 0;
  for (const auto& layer : model.layers) {
    if (layer.shape.kind == LayerKind::bias) {
      out.layers.push_back(encode_bias(layer));
    } else {
      const int levels = layer.shape.kind == LayerKind::conv
                             ? config.levels_conv
                             : config.levels_fc;
      const SparsifyResult sparse = sparsify(layer, rate.pruning_rate);
      const QuantizedResult quantized =
          quantize(sparse.kept_values, levels,
                   derive_stream(seed, static_cast<std::uint64_t>(
                                           layer.shape.layer_id)));
      out.layers.push_back(encode(layer.shape, sparse.mask, quantized));
    }
    total_bits += out.layers.back().bits.total();
  }
  out.achieved_alpha =
      static_cast<double>(total_bits_uncompressed(model)) /
      static_cast<double>(total_bits);
  return out;
}

}  // namespace fedgreen

#endif  // FEDGREEN_CODEC_HPP_
