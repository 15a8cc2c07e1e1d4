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

// Self-check suites behind `cgla_sim verify`: kernel flows against the
// reference dot products, and exhaustive decoder sweeps.

#ifndef CGLASIM_VERIFY_HPP_
#define CGLASIM_VERIFY_HPP_

#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cglasim/half.hpp"
#include "cglasim/isa.hpp"
#include "cglasim/kernels.hpp"
#include "cglasim/quant.hpp"

namespace cglasim {

struct SuiteResult {
  std::string name;
  std::size_t cases = 0;
  std::size_t failures = 0;
  std::string first_failure;

  void fail(const std::string& what) {
    if (failures++ == 0) first_failure = what;
  }
  bool ok() const { return failures == 0; }
};

// ---- Random operands ----

inline uint16_t random_scale_half(std::mt19937_64& rng) {
  std::uniform_real_distribution<float> mag(1e-4f, 0.25f);
  const float v = mag(rng);
  return f32_to_f16(rng() & 1 ? -v : v);
}

inline std::vector<BlockQ8_0> random_q8_0(std::mt19937_64& rng, std::size_t blocks) {
  std::uniform_int_distribution<int> q(-127, 127);
  std::vector<BlockQ8_0> v(blocks);
  for (auto& b : v) {
    b.d = random_scale_half(rng);
    for (auto& x : b.qs) x = static_cast<int8_t>(q(rng));
  }
  return v;
}

// Raw random bits: every quant and scale code is reachable.
inline std::vector<BlockQ6_K> random_q6_k(std::mt19937_64& rng, std::size_t blocks) {
  std::vector<BlockQ6_K> v(blocks);
  for (auto& b : v) {
    for (auto& x : b.ql) x = static_cast<uint8_t>(rng());
    for (auto& x : b.qh) x = static_cast<uint8_t>(rng());
    for (auto& x : b.scales) x = static_cast<int8_t>(static_cast<uint8_t>(rng()));
    b.d = random_scale_half(rng);
  }
  return v;
}

inline std::vector<BlockQ3_K> random_q3_k(std::mt19937_64& rng, std::size_t blocks) {
  std::vector<BlockQ3_K> v(blocks);
  for (auto& b : v) {
    for (auto& x : b.hmask) x = static_cast<uint8_t>(rng());
    for (auto& x : b.qs) x = static_cast<uint8_t>(rng());
    for (auto& x : b.scales) x = static_cast<uint8_t>(rng());
    b.d = random_scale_half(rng);
  }
  return v;
}

inline std::vector<BlockQ8Act> random_q8_k(std::mt19937_64& rng, std::size_t blocks) {
  std::uniform_int_distribution<int> q(-127, 127);
  std::uniform_real_distribution<float> d(1e-4f, 0.05f);
  std::vector<BlockQ8Act> v(blocks);
  for (auto& b : v) {
    b.d = d(rng);
    for (auto& x : b.qs) x = static_cast<int8_t>(q(rng));
    b.refresh_sums();
  }
  return v;
}

inline Fp16Vec random_fp16(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<float> g(0.0f, 1.0f);
  Fp16Vec v;
  v.values.resize(n);
  for (auto& h : v.values) h = f32_to_f16(g(rng));
  return v;
}

// Random weight/activation pair for one format; `blocks` bursts or blocks.
inline std::pair<QuantTensor, QuantTensor> random_operands(QuantFormat f, std::mt19937_64& rng,
                                                           std::size_t blocks) {
  switch (f) {
    case QuantFormat::FP16: return {random_fp16(rng, 16 * blocks), random_fp16(rng, 16 * blocks)};
    case QuantFormat::Q8_0: return {random_q8_0(rng, blocks), random_q8_0(rng, blocks)};
    case QuantFormat::Q3_K: return {random_q3_k(rng, blocks), random_q8_k(rng, blocks)};
    case QuantFormat::Q6_K: return {random_q6_k(rng, blocks), random_q8_k(rng, blocks)};
    case QuantFormat::Q8_K: break;
  }
  throw UnsupportedFormat("no kernel for Q8_K");
}

// Predicted exec - ref for one Q3_K super-block: the scale rounding drops
// (s - 2*s5) in {0, 1} per sub-block.
inline double q3_k_expected_gap(const BlockQ3_K& w, const BlockQ8Act& a) {
  const auto sd = subblock_dots(w, a);
  int64_t drop = 0;
  for (std::size_t j = 0; j < 16; ++j) {
    drop += static_cast<int64_t>(w.scale(j) - 2 * cvt53_scale(w.scale_code(j))) * sd[j];
  }
  return -static_cast<double>(scale_product(w.d, a.d)) * static_cast<double>(drop);
}

namespace detail {
inline std::string hexf(double v) {
  std::ostringstream os;
  os << std::hexfloat << v;
  return os.str();
}
}  // namespace detail

// ---- Suites ----

// Q8_0/Q6_K: bit-identical values and partials. Q3_K: the rounding gap
// matches q3_k_expected_gap exactly. FP16: within the FMA-chain bound.
inline SuiteResult verify_dot(QuantFormat f, std::size_t cases, uint64_t seed) {
  SuiteResult r;
  r.name = "dot." + std::string(format_name(f));
  std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ull * (static_cast<uint64_t>(f) + 1)));
  std::uniform_int_distribution<std::size_t> len(1, 8);
  for (std::size_t i = 0; i < cases; ++i, ++r.cases) {
    const std::size_t blocks = f == QuantFormat::Q3_K ? 1 : len(rng);
    const auto [w, a] = random_operands(f, rng, blocks);
    const DotResult ex = exec_dot(f, w, a);
    const RefDot ref = ref_dot(f, w, a);
    const std::string at = r.name + " case " + std::to_string(i) + ": ";
    if (f == QuantFormat::Q8_0 || f == QuantFormat::Q6_K) {
      if (std::bit_cast<uint64_t>(ex.value) != std::bit_cast<uint64_t>(ref.value)) {
        r.fail(at + "exec " + detail::hexf(ex.value) + " != ref " + detail::hexf(ref.value));
      } else if (ex.integer_partials != ref.partials) {
        r.fail(at + "integer partials differ");
      }
    } else if (f == QuantFormat::Q3_K) {
      const auto& wb = std::get<std::vector<BlockQ3_K>>(w).front();
      const auto& ab = std::get<std::vector<BlockQ8Act>>(a).front();
      const double gap = ex.value - ref.value;
      const double want = q3_k_expected_gap(wb, ab);
      if (gap != want) r.fail(at + "gap " + detail::hexf(gap) + " != " + detail::hexf(want));
    } else {
      const auto& wv = std::get<Fp16Vec>(w).values;
      const auto& av = std::get<Fp16Vec>(a).values;
      double mag = 0;
      for (std::size_t k = 0; k < wv.size(); ++k) {
        mag += std::fabs(static_cast<double>(f16_to_f32(wv[k])) * f16_to_f32(av[k]));
      }
      const double bound = static_cast<double>(wv.size()) * std::ldexp(1.0, -23) * mag;
      if (std::fabs(ex.value - ref.value) > bound) r.fail(at + "outside the accumulation bound");
    }
  }
  return r;
}

// Both lanes over every (nibble pair, crumb pair, scale) input, against the
// Q6_K block decoder.
inline SuiteResult verify_cvt86() {
  SuiteResult r;
  r.name = "isa.CVT86";
  BlockQ6_K blk;
  for (unsigned nib = 0; nib < 256; ++nib) {
    for (unsigned crumbs = 0; crumbs < 16; ++crumbs) {
      blk.ql[0] = static_cast<uint8_t>(nib & 0xfu);
      blk.ql[1] = static_cast<uint8_t>(nib >> 4);
      blk.qh[0] = static_cast<uint8_t>(crumbs & 0x3u);
      blk.qh[1] = static_cast<uint8_t>(crumbs >> 2);
      const uint32_t in0 = nib | (crumbs << 8);
      for (unsigned sc = 0; sc < 256; ++sc, ++r.cases) {
        const int s = static_cast<int8_t>(static_cast<uint8_t>(sc));
        const uint32_t want = pack_i16x2(blk.quant(0) * s, blk.quant(1) * s);
        const PEWord out = op_cvt86(PEWord::from_lanes(in0, in0), PEWord::from_lanes(sc, sc));
        if (out.lane(0) != want || out.lane(1) != want) {
          r.fail("CVT86 nib=" + std::to_string(nib) + " crumbs=" + std::to_string(crumbs) +
                 " scale=" + std::to_string(s));
        }
      }
    }
  }
  return r;
}

// Every (lows, highs, scale code) input against the Q3_K block decoder and
// floor(s / 2).
inline SuiteResult verify_cvt53() {
  SuiteResult r;
  r.name = "isa.CVT53";
  BlockQ3_K blk;
  for (unsigned lows = 0; lows < 256; ++lows) {
    for (unsigned highs = 0; highs < 16; ++highs) {
      blk.qs[0] = static_cast<uint8_t>(lows);
      blk.hmask[0] = static_cast<uint8_t>(highs);
      const uint32_t in0 = lows | (highs << 8);
      for (unsigned code = 0; code < 64; ++code, ++r.cases) {
        blk.set_scale_code(0, code);
        const int s5 = static_cast<int>(std::floor(blk.scale(0) / 2.0));
        uint32_t want = static_cast<uint8_t>(static_cast<int8_t>(s5));
        for (unsigned k = 0; k < 4; ++k) {
          want |= (static_cast<uint32_t>(blk.quant(32 * k)) & 0x7u) << (8 + 4 * k);
        }
        const PEWord out = op_cvt53(PEWord::from_lanes(in0, in0), PEWord::from_lanes(code, code));
        if (out.lane(0) != want || out.lane(1) != want) {
          r.fail("CVT53 lows=" + std::to_string(lows) + " highs=" + std::to_string(highs) +
                 " code=" + std::to_string(code));
        }
      }
    }
  }
  return r;
}

// All 65536 half patterns: table lookup against an ldexp decoder.
inline SuiteResult verify_half_table() {
  SuiteResult r;
  r.name = "half.LUT";
  for (uint32_t h = 0; h < 65536; ++h, ++r.cases) {
    const bool neg = h & 0x8000u;
    const int e = static_cast<int>((h >> 10) & 0x1fu);
    const int m = static_cast<int>(h & 0x3ffu);
    const float got = f16_to_f32(static_cast<uint16_t>(h));
    bool good;
    if (e == 31 && m != 0) {
      const uint32_t bits = std::bit_cast<uint32_t>(got);
      good = std::isnan(got) && std::signbit(got) == neg && ((bits & 0x7fffffu) >> 13) == static_cast<uint32_t>(m);
    } else {
      double mag;
      if (e == 31) {
        mag = INFINITY;
      } else if (e == 0) {
        mag = std::ldexp(static_cast<double>(m), -24);
      } else {
        mag = std::ldexp(static_cast<double>(1024 + m), e - 25);
      }
      const float want = static_cast<float>(neg ? -mag : mag);
      good = std::bit_cast<uint32_t>(got) == std::bit_cast<uint32_t>(want);
    }
    if (!good) r.fail("half pattern " + std::to_string(h));
  }
  return r;
}

inline std::vector<SuiteResult> run_verification(std::size_t cases, uint64_t seed) {
  std::vector<SuiteResult> out;
  for (auto f : kWeightFormats) out.push_back(verify_dot(f, cases, seed));
  out.push_back(verify_cvt86());
  out.push_back(verify_cvt53());
  out.push_back(verify_half_table());
  return out;
}

}  // namespace cglasim

#endif  // CGLASIM_VERIFY_HPP_
