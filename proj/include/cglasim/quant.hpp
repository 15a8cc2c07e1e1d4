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

// Block quantization formats (GGUF payload layouts), quantizers, decoders
// and double-precision reference dot products.

#ifndef CGLASIM_QUANT_HPP_
#define CGLASIM_QUANT_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "cglasim/error.hpp"
#include "cglasim/half.hpp"

namespace cglasim {

// Q8_K is the activation companion of the K formats, never a weight format.
enum class QuantFormat : uint8_t { FP16 = 0, Q8_0 = 1, Q3_K = 2, Q6_K = 3, Q8_K = 4 };

inline constexpr std::array<QuantFormat, 4> kWeightFormats = {
    QuantFormat::FP16, QuantFormat::Q8_0, QuantFormat::Q3_K, QuantFormat::Q6_K};

constexpr std::string_view format_name(QuantFormat f) {
  switch (f) {
    case QuantFormat::FP16: return "FP16";
    case QuantFormat::Q8_0: return "Q8_0";
    case QuantFormat::Q3_K: return "Q3_K";
    case QuantFormat::Q6_K: return "Q6_K";
    case QuantFormat::Q8_K: return "Q8_K";
  }
  return "?";
}

inline QuantFormat parse_format(std::string_view s) {
  for (auto f : {QuantFormat::FP16, QuantFormat::Q8_0, QuantFormat::Q3_K, QuantFormat::Q6_K,
                 QuantFormat::Q8_K}) {
    if (format_name(f) == s) return f;
  }
  throw UnsupportedFormat("unknown quantization format: " + std::string(s));
}

// Elements per block (FP16: one 16-element burst).
constexpr std::size_t block_elems(QuantFormat f) {
  switch (f) {
    case QuantFormat::FP16: return 16;
    case QuantFormat::Q8_0: return 32;
    default: return 256;
  }
}

constexpr std::size_t block_bytes(QuantFormat f) {
  switch (f) {
    case QuantFormat::FP16: return 32;
    case QuantFormat::Q8_0: return 34;
    case QuantFormat::Q3_K: return 110;
    case QuantFormat::Q6_K: return 210;
    case QuantFormat::Q8_K: return 292;
  }
  return 0;
}

// Activation format paired with a weight format in every dot product.
constexpr QuantFormat activation_format(QuantFormat w) {
  switch (w) {
    case QuantFormat::FP16: return QuantFormat::FP16;
    case QuantFormat::Q8_0: return QuantFormat::Q8_0;
    default: return QuantFormat::Q8_K;
  }
}

struct Fp16Vec {
  std::vector<uint16_t> values;
  bool operator==(const Fp16Vec&) const = default;
};

struct BlockQ8_0 {
  uint16_t d = 0;
  std::array<int8_t, 32> qs{};
  bool operator==(const BlockQ8_0&) const = default;
};

// Element e: n = e/128, r = e%128, g = r/32, l = r%32.
// Low nibble from ql[64n + l + 32*(g&1)] (low half if g<2, else high half),
// high crumb from qh[32n + l] at bit 2g.
struct BlockQ6_K {
  std::array<uint8_t, 128> ql{};
  std::array<uint8_t, 64> qh{};
  std::array<int8_t, 16> scales{};
  uint16_t d = 0;

  static constexpr std::size_t ql_index(std::size_t e) {
    const std::size_t n = e / 128, r = e % 128, g = r / 32, l = r % 32;
    return 64 * n + l + ((g & 1) ? 32 : 0);
  }
  static constexpr unsigned ql_shift(std::size_t e) { return ((e % 128) / 32) >= 2 ? 4 : 0; }
  static constexpr std::size_t qh_index(std::size_t e) { return 32 * (e / 128) + (e % 32); }
  static constexpr unsigned qh_shift(std::size_t e) { return 2 * static_cast<unsigned>((e % 128) / 32); }

  unsigned low4(std::size_t e) const { return (ql[ql_index(e)] >> ql_shift(e)) & 0xfu; }
  unsigned high2(std::size_t e) const { return (qh[qh_index(e)] >> qh_shift(e)) & 0x3u; }
  int quant(std::size_t e) const { return static_cast<int>(low4(e) | (high2(e) << 4)) - 32; }

  void set_quant(std::size_t e, int q) {
    const unsigned u = static_cast<unsigned>(q + 32) & 0x3fu;
    auto& lb = ql[ql_index(e)];
    lb = static_cast<uint8_t>((lb & ~(0xfu << ql_shift(e))) | ((u & 0xfu) << ql_shift(e)));
    auto& hb = qh[qh_index(e)];
    hb = static_cast<uint8_t>((hb & ~(0x3u << qh_shift(e))) | ((u >> 4) << qh_shift(e)));
  }
  bool operator==(const BlockQ6_K&) const = default;
};

// Element e: n = e/128, j = (e%128)/32, l = e%32.
// Low crumb from qs[32n + l] at bit 2j, high bit from hmask[l] at bit 4n + j.
// Scale code j: low nibble in scales[j] (j<8) or the high nibble of
// scales[j-8]; top two bits in scales[8 + j%4] at bit 2*(j/4).
struct BlockQ3_K {
  std::array<uint8_t, 32> hmask{};
  std::array<uint8_t, 64> qs{};
  std::array<uint8_t, 12> scales{};
  uint16_t d = 0;

  static constexpr std::size_t qs_index(std::size_t e) { return 32 * (e / 128) + (e % 32); }
  static constexpr unsigned qs_shift(std::size_t e) { return 2 * static_cast<unsigned>((e % 128) / 32); }
  static constexpr std::size_t hm_index(std::size_t e) { return e % 32; }
  static constexpr unsigned hm_shift(std::size_t e) {
    return static_cast<unsigned>(4 * (e / 128) + (e % 128) / 32);
  }

  unsigned low2(std::size_t e) const { return (qs[qs_index(e)] >> qs_shift(e)) & 0x3u; }
  unsigned high1(std::size_t e) const { return (hmask[hm_index(e)] >> hm_shift(e)) & 0x1u; }
  int quant(std::size_t e) const { return static_cast<int>(low2(e) | (high1(e) << 2)) - 4; }

  void set_quant(std::size_t e, int q) {
    const unsigned u = static_cast<unsigned>(q + 4) & 0x7u;
    auto& qb = qs[qs_index(e)];
    qb = static_cast<uint8_t>((qb & ~(0x3u << qs_shift(e))) | ((u & 0x3u) << qs_shift(e)));
    auto& hb = hmask[hm_index(e)];
    hb = static_cast<uint8_t>((hb & ~(0x1u << hm_shift(e))) | ((u >> 2) << hm_shift(e)));
  }

  unsigned scale_code(std::size_t j) const {
    const unsigned lo = j < 8 ? (scales[j] & 0xfu) : (scales[j - 8] >> 4);
    const unsigned hi = (scales[8 + j % 4] >> (2 * (j / 4))) & 0x3u;
    return lo | (hi << 4);
  }
  int scale(std::size_t j) const { return static_cast<int>(scale_code(j)) - 32; }

  void set_scale_code(std::size_t j, unsigned code) {
    code &= 0x3fu;
    if (j < 8) {
      scales[j] = static_cast<uint8_t>((scales[j] & 0xf0u) | (code & 0xfu));
    } else {
      scales[j - 8] = static_cast<uint8_t>((scales[j - 8] & 0x0fu) | ((code & 0xfu) << 4));
    }
    auto& hb = scales[8 + j % 4];
    const unsigned sh = 2 * static_cast<unsigned>(j / 4);
    hb = static_cast<uint8_t>((hb & ~(0x3u << sh)) | ((code >> 4) << sh));
  }
  bool operator==(const BlockQ3_K&) const = default;
};

struct BlockQ8Act {
  float d = 0.0f;
  std::array<int8_t, 256> qs{};
  std::array<int16_t, 16> bsums{};

  void refresh_sums() {
    for (std::size_t j = 0; j < 16; ++j) {
      int s = 0;
      for (std::size_t i = 0; i < 16; ++i) s += qs[16 * j + i];
      bsums[j] = static_cast<int16_t>(s);
    }
  }
  bool operator==(const BlockQ8Act&) const = default;
};

// Alternative index equals the QuantFormat value.
using QuantTensor = std::variant<Fp16Vec, std::vector<BlockQ8_0>, std::vector<BlockQ3_K>,
                                 std::vector<BlockQ6_K>, std::vector<BlockQ8Act>>;

inline QuantFormat format_of(const QuantTensor& t) { return static_cast<QuantFormat>(t.index()); }

inline std::size_t element_count(const QuantTensor& t) {
  const QuantFormat f = format_of(t);
  if (f == QuantFormat::FP16) return std::get<Fp16Vec>(t).values.size();
  const std::size_t blocks = std::visit([](const auto& seq) -> std::size_t {
    if constexpr (std::is_same_v<std::decay_t<decltype(seq)>, Fp16Vec>) {
      return 0;
    } else {
      return seq.size();
    }
  }, t);
  return blocks * block_elems(f);
}

namespace detail {

inline void check_input(std::span<const float> x, std::size_t multiple) {
  if (x.size() % multiple != 0) {
    throw ShapeError("length " + std::to_string(x.size()) + " is not a multiple of " +
                     std::to_string(multiple));
  }
  for (float v : x) {
    if (!std::isfinite(v)) throw InvalidValue("non-finite input value");
  }
}

inline double amax_of(std::span<const float> x) {
  double m = 0.0;
  for (float v : x) m = std::max(m, std::fabs(static_cast<double>(v)));
  return m;
}

inline int round_clamp(double v, int lo, int hi) {
  const double r = std::nearbyint(v);
  return static_cast<int>(std::clamp(r, static_cast<double>(lo), static_cast<double>(hi)));
}

// Smallest half h >= round(target) such that ok(f16_to_f32(h)) holds.
template <class Pred>
uint16_t half_at_least(double target, Pred ok) {
  uint16_t h = f32_to_f16(static_cast<float>(target));
  while (!ok(static_cast<double>(f16_to_f32(h)))) {
    if (h >= 0x7bffu) throw InvalidValue("scale exceeds half-precision range");
    ++h;
  }
  return h;
}

}  // namespace detail

inline Fp16Vec quantize_fp16(std::span<const float> x) {
  detail::check_input(x, 16);
  Fp16Vec out;
  out.values.reserve(x.size());
  for (float v : x) {
    if (std::fabs(v) > kHalfMax) throw InvalidValue("value exceeds half-precision range");
    out.values.push_back(f32_to_f16(v));
  }
  return out;
}

inline std::vector<BlockQ8_0> quantize_q8_0(std::span<const float> x) {
  detail::check_input(x, 32);
  std::vector<BlockQ8_0> out(x.size() / 32);
  for (std::size_t b = 0; b < out.size(); ++b) {
    auto xs = x.subspan(32 * b, 32);
    const double amax = detail::amax_of(xs);
    auto& blk = out[b];
    if (amax == 0.0) continue;
    blk.d = detail::half_at_least(amax / 127.0, [&](double d) { return d > 0 && amax / d <= 127.5; });
    const double d = f16_to_f32(blk.d);
    for (std::size_t i = 0; i < 32; ++i) {
      blk.qs[i] = static_cast<int8_t>(detail::round_clamp(xs[i] / d, -127, 127));
    }
  }
  return out;
}

// Sub-scales are rounded up so every element stays inside its grid range.
inline std::vector<BlockQ6_K> quantize_q6_k(std::span<const float> x) {
  detail::check_input(x, 256);
  std::vector<BlockQ6_K> out(x.size() / 256);
  for (std::size_t b = 0; b < out.size(); ++b) {
    auto xs = x.subspan(256 * b, 256);
    std::array<double, 16> a{};
    double amax_a = 0.0;
    for (std::size_t j = 0; j < 16; ++j) {
      a[j] = detail::amax_of(xs.subspan(16 * j, 16)) / 31.0;
      amax_a = std::max(amax_a, a[j]);
    }
    auto& blk = out[b];
    for (std::size_t e = 0; e < 256; ++e) blk.set_quant(e, 0);
    if (amax_a == 0.0) continue;
    blk.d = detail::half_at_least(amax_a / 127.0, [&](double d) {
      return d > 0 && std::ceil(amax_a / d) <= 127.0;
    });
    const double d = f16_to_f32(blk.d);
    for (std::size_t j = 0; j < 16; ++j) {
      const int sc = static_cast<int>(std::ceil(a[j] / d));
      blk.scales[j] = static_cast<int8_t>(sc);
      if (sc == 0) continue;
      const double step = d * sc;
      for (std::size_t i = 0; i < 16; ++i) {
        blk.set_quant(16 * j + i, detail::round_clamp(xs[16 * j + i] / step, -32, 31));
      }
    }
  }
  return out;
}

inline std::vector<BlockQ3_K> quantize_q3_k(std::span<const float> x) {
  detail::check_input(x, 256);
  std::vector<BlockQ3_K> out(x.size() / 256);
  for (std::size_t b = 0; b < out.size(); ++b) {
    auto xs = x.subspan(256 * b, 256);
    std::array<double, 16> a{};
    double amax_a = 0.0;
    for (std::size_t j = 0; j < 16; ++j) {
      a[j] = detail::amax_of(xs.subspan(16 * j, 16)) / 3.0;
      amax_a = std::max(amax_a, a[j]);
    }
    auto& blk = out[b];
    for (std::size_t e = 0; e < 256; ++e) blk.set_quant(e, 0);
    for (std::size_t j = 0; j < 16; ++j) blk.set_scale_code(j, 32);
    if (amax_a == 0.0) continue;
    blk.d = detail::half_at_least(amax_a / 31.0, [&](double d) {
      return d > 0 && std::ceil(amax_a / d) <= 31.0;
    });
    const double d = f16_to_f32(blk.d);
    for (std::size_t j = 0; j < 16; ++j) {
      const int sc = static_cast<int>(std::ceil(a[j] / d));
      blk.set_scale_code(j, static_cast<unsigned>(sc + 32));
      if (sc == 0) continue;
      const double step = d * sc;
      for (std::size_t i = 0; i < 16; ++i) {
        blk.set_quant(16 * j + i, detail::round_clamp(xs[16 * j + i] / step, -4, 3));
      }
    }
  }
  return out;
}

inline std::vector<BlockQ8Act> quantize_q8_k(std::span<const float> x) {
  detail::check_input(x, 256);
  std::vector<BlockQ8Act> out(x.size() / 256);
  for (std::size_t b = 0; b < out.size(); ++b) {
    auto xs = x.subspan(256 * b, 256);
    const double amax = detail::amax_of(xs);
    auto& blk = out[b];
    if (amax > 0.0) {
      blk.d = static_cast<float>(amax / 127.0);
      const double d = blk.d;
      for (std::size_t i = 0; i < 256; ++i) {
        blk.qs[i] = static_cast<int8_t>(detail::round_clamp(xs[i] / d, -127, 127));
      }
    }
    blk.refresh_sums();
  }
  return out;
}

inline QuantTensor quantize(QuantFormat f, std::span<const float> x) {
  switch (f) {
    case QuantFormat::FP16: return quantize_fp16(x);
    case QuantFormat::Q8_0: return quantize_q8_0(x);
    case QuantFormat::Q3_K: return quantize_q3_k(x);
    case QuantFormat::Q6_K: return quantize_q6_k(x);
    case QuantFormat::Q8_K: return quantize_q8_k(x);
  }
  throw UnsupportedFormat("unknown format");
}

inline std::vector<double> dequantize(const QuantTensor& t) {
  std::vector<double> out;
  switch (format_of(t)) {
    case QuantFormat::FP16:
      for (uint16_t h : std::get<Fp16Vec>(t).values) out.push_back(f16_to_f32(h));
      break;
    case QuantFormat::Q8_0:
      for (const auto& b : std::get<std::vector<BlockQ8_0>>(t)) {
        const double d = f16_to_f32(b.d);
        for (int8_t q : b.qs) out.push_back(d * q);
      }
      break;
    case QuantFormat::Q3_K:
      for (const auto& b : std::get<std::vector<BlockQ3_K>>(t)) {
        const double d = f16_to_f32(b.d);
        for (std::size_t e = 0; e < 256; ++e) out.push_back(d * b.scale(e / 16) * b.quant(e));
      }
      break;
    case QuantFormat::Q6_K:
      for (const auto& b : std::get<std::vector<BlockQ6_K>>(t)) {
        const double d = f16_to_f32(b.d);
        for (std::size_t e = 0; e < 256; ++e) out.push_back(d * b.scales[e / 16] * b.quant(e));
      }
      break;
    case QuantFormat::Q8_K:
      for (const auto& b : std::get<std::vector<BlockQ8Act>>(t)) {
        for (int8_t q : b.qs) out.push_back(static_cast<double>(b.d) * q);
      }
      break;
  }
  return out;
}

// Integer dot of each 16-element sub-block, before sub-scales.
template <class Block>
std::array<int32_t, 16> subblock_dots(const Block& w, const BlockQ8Act& a) {
  std::array<int32_t, 16> s{};
  for (std::size_t e = 0; e < 256; ++e) s[e / 16] += w.quant(e) * a.qs[e];
  return s;
}

inline int64_t block_partial(const BlockQ3_K& w, const BlockQ8Act& a) {
  const auto s = subblock_dots(w, a);
  int64_t p = 0;
  for (std::size_t j = 0; j < 16; ++j) p += static_cast<int64_t>(w.scale(j)) * s[j];
  return p;
}

inline int64_t block_partial(const BlockQ6_K& w, const BlockQ8Act& a) {
  const auto s = subblock_dots(w, a);
  int64_t p = 0;
  for (std::size_t j = 0; j < 16; ++j) p += static_cast<int64_t>(w.scales[j]) * s[j];
  return p;
}

inline int64_t block_partial(const BlockQ8_0& w, const BlockQ8_0& a) {
  int64_t p = 0;
  for (std::size_t i = 0; i < 32; ++i) p += w.qs[i] * a.qs[i];
  return p;
}

// Single-precision product of the weight super-scale and activation scale.
inline float scale_product(uint16_t dw, float da) { return f16_to_f32(dw) * da; }

struct RefDot {
  double value = 0.0;
  std::vector<int64_t> partials;
};

// Q8_0: acc = fmaf(d_w*d_a, partial, acc) over blocks in ascending order.
// K formats: value += double(d_w*d_a) * partial, accumulated in double.
// FP16: exact double products summed in index order.
inline RefDot ref_dot(QuantFormat f, const QuantTensor& w, const QuantTensor& a) {
  if (format_of(w) != f) throw FormatError("weights are not " + std::string(format_name(f)));
  if (format_of(a) != activation_format(f)) {
    throw FormatError("activations for " + std::string(format_name(f)) + " must be " +
                      std::string(format_name(activation_format(f))));
  }
  RefDot r;
  switch (f) {
    case QuantFormat::FP16: {
      const auto& wv = std::get<Fp16Vec>(w).values;
      const auto& av = std::get<Fp16Vec>(a).values;
      if (wv.size() != av.size()) throw ShapeError("element counts differ");
      double acc = 0.0;
      for (std::size_t i = 0; i < wv.size(); ++i) {
        acc += static_cast<double>(f16_to_f32(wv[i])) * static_cast<double>(f16_to_f32(av[i]));
      }
      r.value = acc;
      return r;
    }
    case QuantFormat::Q8_0: {
      const auto& wb = std::get<std::vector<BlockQ8_0>>(w);
      const auto& ab = std::get<std::vector<BlockQ8_0>>(a);
      if (wb.size() != ab.size()) throw ShapeError("element counts differ");
      float acc = 0.0f;
      for (std::size_t b = 0; b < wb.size(); ++b) {
        const int64_t p = block_partial(wb[b], ab[b]);
        r.partials.push_back(p);
        acc = std::fma(f16_to_f32(wb[b].d) * f16_to_f32(ab[b].d), static_cast<float>(p), acc);
      }
      r.value = acc;
      return r;
    }
    case QuantFormat::Q3_K:
    case QuantFormat::Q6_K: {
      const auto& ab = std::get<std::vector<BlockQ8Act>>(a);
      auto run = [&](const auto& wb) {
        if (wb.size() != ab.size()) throw ShapeError("element counts differ");
        double acc = 0.0;
        for (std::size_t b = 0; b < wb.size(); ++b) {
          const int64_t p = block_partial(wb[b], ab[b]);
          r.partials.push_back(p);
          acc += static_cast<double>(scale_product(wb[b].d, ab[b].d)) * static_cast<double>(p);
        }
        r.value = acc;
      };
      if (f == QuantFormat::Q3_K) {
        run(std::get<std::vector<BlockQ3_K>>(w));
      } else {
        run(std::get<std::vector<BlockQ6_K>>(w));
      }
      return r;
    }
    case QuantFormat::Q8_K:
      break;
  }
  throw UnsupportedFormat("Q8_K is an activation format");
}

// ---- Binary payloads (little-endian, GGUF field order) ----

namespace detail {
inline void put16(std::vector<uint8_t>& o, uint16_t v) {
  o.push_back(static_cast<uint8_t>(v & 0xffu));
  o.push_back(static_cast<uint8_t>(v >> 8));
}
inline uint16_t get16(const uint8_t* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }
template <class Arr>
void put_arr(std::vector<uint8_t>& o, const Arr& a) {
  const auto* p = reinterpret_cast<const uint8_t*>(a.data());
  o.insert(o.end(), p, p + sizeof(a));
}
template <class Arr>
void get_arr(Arr& a, const uint8_t*& p) {
  std::memcpy(a.data(), p, sizeof(a));
  p += sizeof(a);
}
}  // namespace detail

inline std::vector<uint8_t> encode_blocks(const QuantTensor& t) {
  std::vector<uint8_t> o;
  switch (format_of(t)) {
    case QuantFormat::FP16:
      for (uint16_t h : std::get<Fp16Vec>(t).values) detail::put16(o, h);
      break;
    case QuantFormat::Q8_0:
      for (const auto& b : std::get<std::vector<BlockQ8_0>>(t)) {
        detail::put16(o, b.d);
        detail::put_arr(o, b.qs);
      }
      break;
    case QuantFormat::Q3_K:
      for (const auto& b : std::get<std::vector<BlockQ3_K>>(t)) {
        detail::put_arr(o, b.hmask);
        detail::put_arr(o, b.qs);
        detail::put_arr(o, b.scales);
        detail::put16(o, b.d);
      }
      break;
    case QuantFormat::Q6_K:
      for (const auto& b : std::get<std::vector<BlockQ6_K>>(t)) {
        detail::put_arr(o, b.ql);
        detail::put_arr(o, b.qh);
        detail::put_arr(o, b.scales);
        detail::put16(o, b.d);
      }
      break;
    case QuantFormat::Q8_K:
      for (const auto& b : std::get<std::vector<BlockQ8Act>>(t)) {
        const auto bits = std::bit_cast<uint32_t>(b.d);
        for (int k = 0; k < 4; ++k) o.push_back(static_cast<uint8_t>(bits >> (8 * k)));
        detail::put_arr(o, b.qs);
        for (int16_t s : b.bsums) detail::put16(o, static_cast<uint16_t>(s));
      }
      break;
  }
  return o;
}

inline QuantTensor decode_blocks(QuantFormat f, std::span<const uint8_t> bytes) {
  const std::size_t bb = block_bytes(f);
  const std::size_t unit = f == QuantFormat::FP16 ? 2 : bb;
  if (bytes.size() % unit != 0) {
    throw ShapeError("payload of " + std::to_string(bytes.size()) + " bytes is not a multiple of " +
                     std::to_string(unit));
  }
  const std::size_t n = bytes.size() / unit;
  const uint8_t* p = bytes.data();
  switch (f) {
    case QuantFormat::FP16: {
      Fp16Vec v;
      for (std::size_t i = 0; i < n; ++i, p += 2) v.values.push_back(detail::get16(p));
      return v;
    }
    case QuantFormat::Q8_0: {
      std::vector<BlockQ8_0> v(n);
      for (auto& b : v) {
        b.d = detail::get16(p);
        p += 2;
        detail::get_arr(b.qs, p);
      }
      return v;
    }
    case QuantFormat::Q3_K: {
      std::vector<BlockQ3_K> v(n);
      for (auto& b : v) {
        detail::get_arr(b.hmask, p);
        detail::get_arr(b.qs, p);
        detail::get_arr(b.scales, p);
        b.d = detail::get16(p);
        p += 2;
      }
      return v;
    }
    case QuantFormat::Q6_K: {
      std::vector<BlockQ6_K> v(n);
      for (auto& b : v) {
        detail::get_arr(b.ql, p);
        detail::get_arr(b.qh, p);
        detail::get_arr(b.scales, p);
        b.d = detail::get16(p);
        p += 2;
      }
      return v;
    }
    case QuantFormat::Q8_K: {
      std::vector<BlockQ8Act> v(n);
      for (auto& b : v) {
        uint32_t bits = 0;
        for (int k = 0; k < 4; ++k) bits |= static_cast<uint32_t>(p[k]) << (8 * k);
        b.d = std::bit_cast<float>(bits);
        p += 4;
        detail::get_arr(b.qs, p);
        for (auto& s : b.bsums) {
          s = static_cast<int16_t>(detail::get16(p));
          p += 2;
        }
      }
      return v;
    }
  }
  throw UnsupportedFormat("unknown format");
}

// Text fixture line: "<FORMAT> <hex payload>".
inline std::string to_fixture_line(const QuantTensor& t) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s(format_name(format_of(t)));
  s.push_back(' ');
  for (uint8_t b : encode_blocks(t)) {
    s.push_back(kHex[b >> 4]);
    s.push_back(kHex[b & 0xf]);
  }
  return s;
}

inline QuantTensor from_fixture_line(std::string_view line) {
  const auto sp = line.find(' ');
  if (sp == std::string_view::npos) throw FormatError("fixture line has no payload");
  const QuantFormat f = parse_format(line.substr(0, sp));
  const auto hex = line.substr(sp + 1);
  if (hex.size() % 2 != 0) throw FormatError("odd hex length");
  auto nib = [](char c) -> uint8_t {
    if (c >= '0' && c <= '9') return static_cast<uint8_t>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<uint8_t>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return static_cast<uint8_t>(c - 'A' + 10);
    throw FormatError("bad hex digit");
  };
  std::vector<uint8_t> bytes;
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    bytes.push_back(static_cast<uint8_t>((nib(hex[i]) << 4) | nib(hex[i + 1])));
  }
  return decode_blocks(f, bytes);
}

}  // namespace cglasim

#endif  // CGLASIM_QUANT_HPP_
