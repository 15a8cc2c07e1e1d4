// Copyright 2026 The cglasim Authors
// SPDX-License-Identifier: Apache-2.0
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

// Custom PE instructions on 64-bit words of two 32-bit lanes.
// Lane 0 is the low 32 bits; byte 0 of a lane is its least significant byte.

#ifndef CGLASIM_ISA_HPP_
#define CGLASIM_ISA_HPP_

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace cglasim {

struct PEWord {
  uint64_t bits = 0;

  constexpr uint32_t lane(int i) const { return static_cast<uint32_t>(bits >> (32 * i)); }
  static constexpr PEWord from_lanes(uint32_t lo, uint32_t hi) {
    return PEWord{static_cast<uint64_t>(lo) | (static_cast<uint64_t>(hi) << 32)};
  }
  constexpr bool operator==(const PEWord&) const = default;
};

constexpr int32_t sx8(uint32_t v) { return static_cast<int8_t>(static_cast<uint8_t>(v)); }
constexpr int32_t sx16(uint32_t v) { return static_cast<int16_t>(static_cast<uint16_t>(v)); }
constexpr int32_t sx24(uint32_t v) {
  v &= 0xffffffu;
  return (v & 0x800000u) ? static_cast<int32_t>(v | 0xff000000u) : static_cast<int32_t>(v);
}
// Wraps to 24 bits and sign-extends into a full lane.
constexpr uint32_t to_int24_lane(int64_t v) {
  return static_cast<uint32_t>(sx24(static_cast<uint32_t>(v & 0xffffff)));
}

constexpr uint32_t pack_i8x4(int a0, int a1, int a2, int a3) {
  return (static_cast<uint32_t>(a0) & 0xffu) | ((static_cast<uint32_t>(a1) & 0xffu) << 8) |
         ((static_cast<uint32_t>(a2) & 0xffu) << 16) | ((static_cast<uint32_t>(a3) & 0xffu) << 24);
}
constexpr uint32_t pack_i16x2(int a0, int a1) {
  return (static_cast<uint32_t>(a0) & 0xffffu) | ((static_cast<uint32_t>(a1) & 0xffffu) << 16);
}
constexpr uint32_t lane_byte(uint32_t lane, int k) { return (lane >> (8 * k)) & 0xffu; }

namespace detail {
template <class F>
constexpr PEWord per_lane(PEWord a, PEWord b, F f) {
  return PEWord::from_lanes(f(a.lane(0), b.lane(0)), f(a.lane(1), b.lane(1)));
}
}  // namespace detail

// Four signed 8-bit products summed into a sign-extended 24-bit result.
constexpr PEWord op_sml8(PEWord a, PEWord b) {
  return detail::per_lane(a, b, [](uint32_t x, uint32_t y) {
    int64_t s = 0;
    for (int k = 0; k < 4; ++k) s += sx8(lane_byte(x, k)) * sx8(lane_byte(y, k));
    return to_int24_lane(s);
  });
}

// 24-bit add, wrapping modulo 2^24.
constexpr PEWord op_ad24(PEWord a, PEWord b) {
  return detail::per_lane(a, b, [](uint32_t x, uint32_t y) {
    return to_int24_lane(static_cast<int64_t>(sx24(x)) + sx24(y));
  });
}

// Two signed 16-bit values of a times the two low signed bytes of b.
constexpr PEWord op_sml16(PEWord a, PEWord b) {
  return detail::per_lane(a, b, [](uint32_t x, uint32_t y) {
    const int32_t s = sx16(x) * sx8(lane_byte(y, 0)) + sx16(x >> 16) * sx8(lane_byte(y, 1));
    return static_cast<uint32_t>(s);
  });
}

// Decodes two 6-bit quants (low nibbles in ql_nibbles, high crumbs in
// qh_crumbs, element 0 in the low bits) and multiplies them by the scale.
constexpr std::array<int16_t, 2> op_cvt86(uint8_t ql_nibbles, uint8_t qh_crumbs, int8_t scale) {
  std::array<int16_t, 2> out{};
  for (int k = 0; k < 2; ++k) {
    const int q6 = static_cast<int>(((ql_nibbles >> (4 * k)) & 0xfu) |
                                    (((qh_crumbs >> (2 * k)) & 0x3u) << 4)) - 32;
    out[k] = static_cast<int16_t>(q6 * scale);
  }
  return out;
}

// Word form: in0 lane = {byte0 ql_nibbles, byte1 qh_crumbs}, in1 lane byte0 = scale.
constexpr PEWord op_cvt86(PEWord a, PEWord b) {
  return detail::per_lane(a, b, [](uint32_t x, uint32_t y) {
    const auto v = op_cvt86(static_cast<uint8_t>(lane_byte(x, 0)), static_cast<uint8_t>(lane_byte(x, 1)),
                            static_cast<int8_t>(lane_byte(y, 0)));
    return pack_i16x2(v[0], v[1]);
  });
}

// 6-bit scale code -> 5-bit signed scale, floor((code - 32) / 2).
constexpr int8_t cvt53_scale(unsigned code6) {
  const int s = static_cast<int>(code6 & 0x3fu) - 32;
  return static_cast<int8_t>(s >= 0 ? s / 2 : -((-s + 1) / 2));
}

constexpr int cvt53_quant(unsigned low2, unsigned high1) {
  return static_cast<int>((low2 & 0x3u) | ((high1 & 0x1u) << 2)) - 4;
}

// 3-bit quants packed two per byte, one per nibble, low nibble first.
inline int unpack_q3(std::span<const uint8_t> packed, std::size_t i) {
  const unsigned v = (packed[i / 2] >> (4 * (i % 2))) & 0x7u;
  return (v & 0x4u) ? static_cast<int>(v) - 8 : static_cast<int>(v);
}

struct Cvt53Out {
  std::array<int8_t, 16> scales5{};
  std::vector<uint8_t> q3;  // packed, see unpack_q3
};

// qs2: four 2-bit lows per byte, element i at bits 2*(i%4) of byte i/4.
// qh1: eight high bits per byte, element i at bit i%8 of byte i/8.
inline Cvt53Out op_cvt53(const std::array<uint8_t, 16>& scales6, std::span<const uint8_t> qs2,
                         std::span<const uint8_t> qh1) {
  Cvt53Out out;
  for (std::size_t j = 0; j < 16; ++j) out.scales5[j] = cvt53_scale(scales6[j]);
  const std::size_t n = std::min(qs2.size() * 4, qh1.size() * 8);
  out.q3.assign((n + 1) / 2, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const int q = cvt53_quant(qs2[i / 4] >> (2 * (i % 4)), qh1[i / 8] >> (i % 8));
    out.q3[i / 2] = static_cast<uint8_t>(out.q3[i / 2] | ((static_cast<unsigned>(q) & 0x7u) << (4 * (i % 2))));
  }
  return out;
}

// Word form: in0 lane = {byte0 four 2-bit lows, byte1 four high bits},
// in1 lane byte0 = scale code. Out lane: byte0 = s5, then four 3-bit quants
// in consecutive nibbles starting at bit 8.
constexpr PEWord op_cvt53(PEWord a, PEWord b) {
  return detail::per_lane(a, b, [](uint32_t x, uint32_t y) {
    uint32_t out = static_cast<uint8_t>(cvt53_scale(lane_byte(y, 0)));
    for (unsigned k = 0; k < 4; ++k) {
      const int q = cvt53_quant(lane_byte(x, 0) >> (2 * k), lane_byte(x, 1) >> k);
      out |= (static_cast<uint32_t>(q) & 0x7u) << (8 + 4 * k);
    }
    return out;
  });
}

inline PEWord op_fma32x2(PEWord a, PEWord b, PEWord c) {
  auto f = [](uint32_t x) { return std::bit_cast<float>(x); };
  auto lane = [&](int i) {
    return std::bit_cast<uint32_t>(std::fma(f(a.lane(i)), f(b.lane(i)), f(c.lane(i))));
  };
  return PEWord::from_lanes(lane(0), lane(1));
}

inline PEWord pack_f32x2(float lo, float hi) {
  return PEWord::from_lanes(std::bit_cast<uint32_t>(lo), std::bit_cast<uint32_t>(hi));
}
inline float lane_f32(PEWord w, int i) { return std::bit_cast<float>(w.lane(i)); }

enum class Opcode { SML8, AD24, SML16, CVT86, CVT53, FMA32X2 };

constexpr const char* opcode_name(Opcode op) {
  switch (op) {
    case Opcode::SML8: return "SML8";
    case Opcode::AD24: return "AD24";
    case Opcode::SML16: return "SML16";
    case Opcode::CVT86: return "CVT86";
    case Opcode::CVT53: return "CVT53";
    case Opcode::FMA32X2: return "FMA32X2";
  }
  return "?";
}

constexpr int opcode_arity(Opcode op) { return op == Opcode::FMA32X2 ? 3 : 2; }

inline PEWord execute(Opcode op, PEWord a, PEWord b, PEWord c = {}) {
  switch (op) {
    case Opcode::SML8: return op_sml8(a, b);
    case Opcode::AD24: return op_ad24(a, b);
    case Opcode::SML16: return op_sml16(a, b);
    case Opcode::CVT86: return op_cvt86(a, b);
    case Opcode::CVT53: return op_cvt53(a, b);
    case Opcode::FMA32X2: return op_fma32x2(a, b, c);
  }
  return {};
}

}  // namespace cglasim

#endif  // CGLASIM_ISA_HPP_
