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

/// \file bitstream.hpp
/// \brief LSB-first bit packing used by the wire codec.
///
/// Bit order contract: bit n of the stream lives in byte n/8 at bit
/// position n%8, and multi-bit values are written least-significant bit
/// first. The layout is byte-order independent because no value is ever
/// stored as raw multi-byte words.

#ifndef FEDGREEN_BITSTREAM_HPP_
#define FEDGREEN_BITSTREAM_HPP_

#include <cstdint>
#include <cstring>
#include <vector>

#include "fedgreen/errors.hpp"

namespace fedgreen {

class BitWriter {
 public:
  void write_bit(bool bit) {
    if (bit_count_ % 8 == 0) bytes_.push_back(0);
    if (bit) bytes_.back() |= static_cast<std::uint8_t>(1u << (bit_count_ % 8));
    ++bit_count_;
  }

  /// Writes the low `count` bits of `value`, LSB first. Bits above `count`
  /// must be zero.
  void write_bits(std::uint64_t value, int count) {
    if (count < 0 || count > 64)
      throw DomainError("bit count must be in [0, 64]");
    if (count < 64 && (value >> count) != 0)
      throw DomainError("value does not fit in the requested bit count");
    for (int i = 0; i < count; ++i) write_bit(((value >> i) & 1u) != 0);
  }

  void write_f32(float value) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, &value, sizeof(bits));
    write_bits(bits, 32);
  }

  void align_to_byte() {
    while (bit_count_ % 8 != 0) write_bit(false);
  }

  std::size_t bit_count() const { return bit_count_; }

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
  std::size_t bit_count_ = 0;
};

class BitReader {
 public:
  BitReader(const std::uint8_t* data, std::size_t size_bytes)
      : data_(data), bit_size_(size_bytes * 8) {}

  bool read_bit() {
    if (pos_ >= bit_size_)
      throw FormatError("unexpected end of stream", byte_offset());
    const bool bit = ((data_[pos_ >> 3] >> (pos_ & 7)) & 1u) != 0;
    ++pos_;
    return bit;
  }

  std::uint64_t read_bits(int count) {
    if (count < 0 || count > 64)
      throw DomainError("bit count must be in [0, 64]");
    if (pos_ + static_cast<std::size_t>(count) > bit_size_)
      throw FormatError("unexpected end of stream", byte_offset());
    std::uint64_t value = 0;
    for (int i = 0; i < count; ++i) {
      value |= static_cast<std::uint64_t>((data_[pos_ >> 3] >> (pos_ & 7)) & 1u)
               << i;
      ++pos_;
    }
    return value;
  }

  float read_f32() {
    const std::uint32_t bits = static_cast<std::uint32_t>(read_bits(32));
    float value = 0.0f;
    std::memcpy(&value, &bits, sizeof(value));
    return value;
  }

  /// Consumes padding up to the next byte boundary; nonzero pad bits mean
  /// the tail of the record was damaged.
  void align_to_byte() {
    while (pos_ % 8 != 0) {
      if (read_bit())
        throw FormatError("nonzero padding bits", (pos_ - 1) / 8);
    }
  }

  std::size_t bit_pos() const { return pos_; }
  std::size_t bit_size() const { return bit_size_; }
  std::size_t remaining_bits() const { return bit_size_ - pos_; }
  std::size_t byte_offset() const { return pos_ / 8; }

 private:
  const std::uint8_t* data_ = nullptr;
  std::size_t bit_size_ = 0;
  std::size_t pos_ = 0;
};

}  // namespace fedgreen

#endif  // FEDGREEN_BITSTREAM_HPP_
