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

#include <cstdint>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "fedgreen/bitstream.hpp"
#include "fedgreen/prng.hpp"

using namespace fedgreen;

TEST_CASE("bit order is LSB-first within bytes", "[bitstream]") {
  BitWriter w;
  w.write_bits(0b1011, 4);  // bits 1,1,0,1 -> low nibble 0b1011
  w.align_to_byte();
  REQUIRE(w.bytes().size() == 1);
  REQUIRE(w.bytes()[0] == 0x0b);

  BitWriter w2;
  w2.write_bit(true);
  w2.write_bits(0xff, 8);  // spans the byte boundary
  w2.align_to_byte();
  REQUIRE(w2.bytes().size() == 2);
  REQUIRE(w2.bytes()[0] == 0xff);
  REQUIRE(w2.bytes()[1] == 0x01);
}

TEST_CASE("writer rejects out-of-range values", "[bitstream]") {
  BitWriter w;
  REQUIRE_THROWS_AS(w.write_bits(4, 2), DomainError);
  REQUIRE_THROWS_AS(w.write_bits(0, 65), DomainError);
  REQUIRE_THROWS_AS(w.write_bits(0, -1), DomainError);
  REQUIRE_NOTHROW(w.write_bits(3, 2));
  REQUIRE_NOTHROW(w.write_bits(~0ULL, 64));
}

TEST_CASE("random round trips of mixed-width fields", "[bitstream]") {
  Rng rng(555);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::pair<std::uint64_t, int>> fields;
    BitWriter w;
    const int count = 1 + static_cast<int>(rng.next_u64() % 40);
    for (int i = 0; i < count; ++i) {
      const int width = 1 + static_cast<int>(rng.next_u64() % 64);
      const std::uint64_t value =
          width == 64 ? rng.next_u64() : rng.next_u64() & ((1ULL << width) - 1);
      fields.emplace_back(value, width);
      w.write_bits(value, width);
    }
    w.align_to_byte();
    const std::vector<std::uint8_t> bytes = w.bytes();
    BitReader r(bytes.data(), bytes.size());
    for (const auto& [value, width] : fields)
      REQUIRE(r.read_bits(width) == value);
    REQUIRE_NOTHROW(r.align_to_byte());
    REQUIRE(r.remaining_bits() == 0);
  }
}

TEST_CASE("f32 round trip is bit exact", "[bitstream]") {
  BitWriter w;
  const float values[] = {0.0f, -0.0f, 1.5f, -3.25e-7f, 3.4e38f};
  for (float v : values) w.write_f32(v);
  const std::vector<std::uint8_t> bytes = w.bytes();
  BitReader r(bytes.data(), bytes.size());
  for (float v : values) {
    const float got = r.read_f32();
    std::uint32_t a = 0, b = 0;
    std::memcpy(&a, &v, 4);
    std::memcpy(&b, &got, 4);
    REQUIRE(a == b);
  }
}

TEST_CASE("reader reports end of stream with byte offset", "[bitstream]") {
  const std::uint8_t bytes[2] = {0xaa, 0x55};
  BitReader r(bytes, 2);
  REQUIRE_NOTHROW(r.read_bits(16));
  try {
    r.read_bit();
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    REQUIRE(e.byte_offset() == 2);
  }
}

TEST_CASE("nonzero padding is a format error", "[bitstream]") {
  const std::uint8_t bytes[1] = {0b00001101};
  BitReader r(bytes, 1);
  REQUIRE(r.read_bits(2) == 0b01);
  REQUIRE_THROWS_AS(r.align_to_byte(), FormatError);

  const std::uint8_t clean[1] = {0b00000001};
  BitReader r2(clean, 1);
  REQUIRE(r2.read_bit());
  REQUIRE_NOTHROW(r2.align_to_byte());
  REQUIRE(r2.bit_pos() == 8);
}
