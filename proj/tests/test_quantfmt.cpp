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

#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <random>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "cglasim/half.hpp"
#include "cglasim/quant.hpp"
#include "cglasim/verify.hpp"
#include "test_util.hpp"

using namespace cglasim;
using testutil::uniform;
using testutil::uniform_floats;

namespace {

// Scalar decoders written from the GGUF reference loops, independent of the
// block accessors.
std::vector<double> ggml_dequant_q6_k(const BlockQ6_K& b) {
  std::vector<double> y(256);
  const double d = testutil::half_value(b.d);
  for (int n = 0; n < 2; ++n) {
    const uint8_t* ql = b.ql.data() + 64 * n;
    const uint8_t* qh = b.qh.data() + 32 * n;
    const int8_t* sc = b.scales.data() + 8 * n;
    double* out = y.data() + 128 * n;
    for (int l = 0; l < 32; ++l) {
      const int is = l / 16;
      const int q1 = ((ql[l] & 0xf) | (((qh[l] >> 0) & 3) << 4)) - 32;
      const int q2 = ((ql[l + 32] & 0xf) | (((qh[l] >> 2) & 3) << 4)) - 32;
      const int q3 = ((ql[l] >> 4) | (((qh[l] >> 4) & 3) << 4)) - 32;
      const int q4 = ((ql[l + 32] >> 4) | (((qh[l] >> 6) & 3) << 4)) - 32;
      out[l] = d * sc[is] * q1;
      out[l + 32] = d * sc[is + 2] * q2;
      out[l + 64] = d * sc[is + 4] * q3;
      out[l + 96] = d * sc[is + 6] * q4;
    }
  }
  return y;
}

std::vector<double> ggml_dequant_q3_k(const BlockQ3_K& b) {
  uint32_t aux[4];
  std::memcpy(aux, b.scales.data(), 12);
  const uint32_t kmask1 = 0x03030303, kmask2 = 0x0f0f0f0f;
  const uint32_t tmp = aux[2];
  aux[2] = ((aux[0] >> 4) & kmask2) | (((tmp >> 4) & kmask1) << 4);
  aux[3] = ((aux[1] >> 4) & kmask2) | (((tmp >> 6) & kmask1) << 4);
  aux[0] = (aux[0] & kmask2) | (((tmp >> 0) & kmask1) << 4);
  aux[1] = (aux[1] & kmask2) | (((tmp >> 2) & kmask1) << 4);
  uint8_t codes[16];
  std::memcpy(codes, aux, 16);
  const double d = testutil::half_value(b.d);
  std::vector<double> y(256);
  double* out = y.data();
  int is = 0;
  uint8_t m = 1;
  for (int n = 0; n < 2; ++n) {
    const uint8_t* q = b.qs.data() + 32 * n;
    for (int shift = 0; shift < 8; shift += 2) {
      double dl = d * (codes[is++] - 32);
      for (int l = 0; l < 16; ++l) out[l] = dl * (((q[l] >> shift) & 3) - ((b.hmask[l] & m) ? 0 : 4));
      dl = d * (codes[is++] - 32);
      for (int l = 0; l < 16; ++l) {
        out[l + 16] = dl * (((q[l + 16] >> shift) & 3) - ((b.hmask[l + 16] & m) ? 0 : 4));
      }
      out += 32;
      m = static_cast<uint8_t>(m << 1);
    }
  }
  return y;
}

double dot_of(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

// ---- half ----

TEST(Half, KnownPatterns) {
  EXPECT_EQ(f16_to_f32(0x3C00), 1.0f);
  EXPECT_EQ(std::bit_cast<uint32_t>(f16_to_f32(0x0000)), 0u);
  EXPECT_EQ(std::bit_cast<uint32_t>(f16_to_f32(0x8000)), 0x80000000u);
  EXPECT_EQ(f16_to_f32(0x7BFF), 65504.0f);
  EXPECT_EQ(f16_to_f32(0x0001), std::ldexp(1.0f, -24));
  EXPECT_TRUE(std::isinf(f16_to_f32(0x7C00)));
}

TEST(Half, AllPatternsMatchSoftwareWidening) {
  for (uint32_t h = 0; h < 65536; ++h) {
    const double want = testutil::half_value(static_cast<uint16_t>(h));
    const float got = f16_to_f32(static_cast<uint16_t>(h));
    if (std::isnan(want)) {
      ASSERT_TRUE(std::isnan(got)) << h;
    } else {
      ASSERT_EQ(std::bit_cast<uint32_t>(got), std::bit_cast<uint32_t>(static_cast<float>(want))) << h;
    }
  }
}

TEST(Half, NarrowingRoundTripsEveryFiniteHalf) {
  for (uint32_t h = 0; h < 65536; ++h) {
    if (((h >> 10) & 0x1f) == 31) continue;
    ASSERT_EQ(f32_to_f16(f16_to_f32(static_cast<uint16_t>(h))), h);
  }
}

TEST(Half, NarrowingRoundsHalfwayToEven) {
  // 1 + 2^-11 lies halfway between 1 and the next half; ties go to even.
  EXPECT_EQ(f32_to_f16(1.0f + std::ldexp(1.0f, -11)), 0x3C00);
  EXPECT_EQ(f32_to_f16(1.0f + 3 * std::ldexp(1.0f, -11)), 0x3C02);
  EXPECT_EQ(f32_to_f16(70000.0f), 0x7C00);
  EXPECT_EQ(f32_to_f16(-70000.0f), 0xFC00);
}

TEST(Half, NarrowingIsNearestOnRandomFloats) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 20000; ++i) {
    const float x = static_cast<float>(uniform(rng, -60000, 60000) * std::ldexp(1.0, -testutil::uniform_int(rng, 0, 30)));
    const uint16_t h = f32_to_f16(x);
    const double v = testutil::half_value(h);
    const double err = std::fabs(v - x);
    // No neighbour is strictly closer.
    for (int dlt : {-1, 1}) {
      const uint16_t n = static_cast<uint16_t>(h + dlt);
      if (((n >> 10) & 0x1f) == 31 || ((n ^ h) & 0x8000)) continue;
      ASSERT_LE(err, std::fabs(testutil::half_value(n) - x)) << x;
    }
  }
}

// ---- layouts ----

TEST(Layout, BlockSizesMatchGguf) {
  EXPECT_EQ(block_bytes(QuantFormat::Q8_0), 34u);
  EXPECT_EQ(block_bytes(QuantFormat::Q3_K), 110u);
  EXPECT_EQ(block_bytes(QuantFormat::Q6_K), 210u);
  EXPECT_EQ(block_bytes(QuantFormat::Q8_K), 292u);
  EXPECT_EQ(block_elems(QuantFormat::Q8_0), 32u);
  EXPECT_EQ(block_elems(QuantFormat::Q3_K), 256u);
  BlockQ3_K q3;
  EXPECT_EQ(encode_blocks(std::vector<BlockQ3_K>{q3}).size(), 110u);
  EXPECT_EQ(encode_blocks(std::vector<BlockQ6_K>{BlockQ6_K{}}).size(), 210u);
}

TEST(Layout, FormatNamesRoundTrip) {
  for (auto f : {QuantFormat::FP16, QuantFormat::Q8_0, QuantFormat::Q3_K, QuantFormat::Q6_K, QuantFormat::Q8_K}) {
    EXPECT_EQ(parse_format(format_name(f)), f);
  }
  EXPECT_THROW(parse_format("Q4_K"), UnsupportedFormat);
}

TEST(Layout, Q6KAccessorsMatchReferenceDecoder) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const BlockQ6_K b = random_q6_k(rng, 1).front();
    const auto want = ggml_dequant_q6_k(b);
    const auto got = dequantize(std::vector<BlockQ6_K>{b});
    ASSERT_EQ(got, want);
  }
}

TEST(Layout, Q3KAccessorsMatchReferenceDecoder) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 200; ++i) {
    const BlockQ3_K b = random_q3_k(rng, 1).front();
    ASSERT_EQ(dequantize(std::vector<BlockQ3_K>{b}), ggml_dequant_q3_k(b));
  }
}

TEST(Layout, SettersRoundTrip) {
  BlockQ6_K q6;
  BlockQ3_K q3;
  for (std::size_t e = 0; e < 256; ++e) {
    q6.set_quant(e, static_cast<int>(e % 64) - 32);
    q3.set_quant(e, static_cast<int>(e % 8) - 4);
  }
  for (std::size_t e = 0; e < 256; ++e) {
    ASSERT_EQ(q6.quant(e), static_cast<int>(e % 64) - 32);
    ASSERT_EQ(q3.quant(e), static_cast<int>(e % 8) - 4);
  }
  for (std::size_t j = 0; j < 16; ++j) q3.set_scale_code(j, static_cast<unsigned>(4 * j + 1));
  for (std::size_t j = 0; j < 16; ++j) ASSERT_EQ(q3.scale_code(j), 4 * j + 1);
}

// ---- quantize / dequantize ----

TEST(Quantize, ConstantBlockUsesFullRange) {
  const std::vector<float> x(32, 2.0f);
  const auto b = quantize_q8_0(x).front();
  EXPECT_EQ(b.d, f32_to_f16(2.0f / 127.0f));
  for (int8_t q : b.qs) EXPECT_EQ(q, 127);
}

TEST(Quantize, ZerosGiveZeroScale) {
  const std::vector<float> x(32, 0.0f);
  const auto b = quantize_q8_0(x).front();
  EXPECT_EQ(b.d, 0);
  for (int8_t q : b.qs) EXPECT_EQ(q, 0);
}

TEST(Quantize, RejectsBadInput) {
  std::vector<float> x(31, 1.0f);
  EXPECT_THROW(quantize_q8_0(x), ShapeError);
  std::vector<float> y(32, 1.0f);
  y[3] = NAN;
  EXPECT_THROW(quantize_q8_0(y), InvalidValue);
  std::vector<float> z(256, 1.0f);
  z[7] = INFINITY;
  EXPECT_THROW(quantize_q3_k(z), InvalidValue);
}

TEST(Quantize, Q8_0DequantizesToScaleTimesQuant) {
  BlockQ8_0 b;
  b.d = f32_to_f16(0.5f);
  b.qs.fill(1);
  for (double v : dequantize(std::vector<BlockQ8_0>{b})) EXPECT_EQ(v, 0.5);
}

TEST(Quantize, Q3KZeroScaleDequantizesToZero) {
  BlockQ3_K b;
  b.d = f32_to_f16(1.0f);
  for (std::size_t e = 0; e < 256; ++e) b.set_quant(e, -4);
  for (std::size_t j = 0; j < 16; ++j) b.set_scale_code(j, 32);
  for (double v : dequantize(std::vector<BlockQ3_K>{b})) EXPECT_EQ(v, 0.0);
}

// |x - dequantize(quantize(x))| is at most half the step of the element's
// block or sub-block.
TEST(Quantize, RoundTripWithinHalfStep) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const double scale = std::ldexp(1.0, testutil::uniform_int(rng, -6, 6));
    const auto x = uniform_floats(rng, 256, -scale, scale);
    for (auto f : {QuantFormat::Q8_0, QuantFormat::Q3_K, QuantFormat::Q6_K, QuantFormat::Q8_K}) {
      const QuantTensor t = quantize(f, x);
      const auto y = dequantize(t);
      for (std::size_t i = 0; i < 256; ++i) {
        double step = 0;
        switch (f) {
          case QuantFormat::Q8_0: step = f16_to_f32(std::get<std::vector<BlockQ8_0>>(t)[i / 32].d); break;
          case QuantFormat::Q3_K: {
            const auto& b = std::get<std::vector<BlockQ3_K>>(t)[0];
            step = f16_to_f32(b.d) * b.scale(i / 16);
            break;
          }
          case QuantFormat::Q6_K: {
            const auto& b = std::get<std::vector<BlockQ6_K>>(t)[0];
            step = f16_to_f32(b.d) * b.scales[i / 16];
            break;
          }
          default: step = std::get<std::vector<BlockQ8Act>>(t)[0].d; break;
        }
        ASSERT_LE(std::fabs(y[i] - x[i]), 0.5 * step * (1 + 1e-12)) << format_name(f) << " element " << i;
      }
    }
  }
}

TEST(Quantize, Fp16RoundTripWithinHalfUlp) {
  std::mt19937_64 rng(8);
  const auto x = uniform_floats(rng, 4096, -1000, 1000);
  const auto y = dequantize(quantize(QuantFormat::FP16, x));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double ulp = std::ldexp(1.0, std::ilogb(x[i]) - 10);
    ASSERT_LE(std::fabs(y[i] - x[i]), 0.5 * ulp);
  }
}

TEST(Quantize, ActivationSumsMatchQuants) {
  std::mt19937_64 rng(9);
  const auto x = uniform_floats(rng, 1024, -3, 3);
  for (const auto& b : quantize_q8_k(x)) {
    for (std::size_t j = 0; j < 16; ++j) {
      int s = 0;
      for (std::size_t i = 0; i < 16; ++i) s += b.qs[16 * j + i];
      ASSERT_EQ(b.bsums[j], s);
    }
  }
}

TEST(Quantize, DeterministicAndPure) {
  std::mt19937_64 rng(10);
  const auto x = uniform_floats(rng, 512, -1, 1);
  EXPECT_EQ(quantize(QuantFormat::Q3_K, x), quantize(QuantFormat::Q3_K, x));
  const auto t = quantize(QuantFormat::Q6_K, x);
  EXPECT_EQ(dequantize(t), dequantize(t));
}

// ---- ref_dot ----

TEST(RefDot, Q8_0Example) {
  BlockQ8_0 w, a;
  w.d = f32_to_f16(0.5f);
  w.qs.fill(1);
  a.d = f32_to_f16(0.25f);
  a.qs.fill(2);
  const RefDot r = ref_dot(QuantFormat::Q8_0, std::vector<BlockQ8_0>{w}, std::vector<BlockQ8_0>{a});
  EXPECT_EQ(r.value, 8.0);
  ASSERT_EQ(r.partials.size(), 1u);
  EXPECT_EQ(r.partials[0], 64);
}

TEST(RefDot, ZeroActivationsGiveZero) {
  std::mt19937_64 rng(12);
  for (auto f : kWeightFormats) {
    auto [w, a] = random_operands(f, rng, 2);
    std::visit([](auto& t) {
      using T = std::decay_t<decltype(t)>;
      if constexpr (std::is_same_v<T, Fp16Vec>) {
        for (auto& h : t.values) h = 0;
      } else if constexpr (requires { t.front().qs.fill(0); }) {
        for (auto& b : t) {
          b.qs.fill(0);
          if constexpr (std::is_same_v<typename T::value_type, BlockQ8Act>) b.refresh_sums();
        }
      }
    }, a);
    EXPECT_EQ(ref_dot(f, w, a).value, 0.0) << format_name(f);
  }
}

TEST(RefDot, RejectsMismatches) {
  std::mt19937_64 rng(13);
  auto [w, a] = random_operands(QuantFormat::Q6_K, rng, 2);
  EXPECT_THROW(ref_dot(QuantFormat::Q8_0, w, a), FormatError);
  auto [w1, a1] = random_operands(QuantFormat::Q6_K, rng, 1);
  EXPECT_THROW(ref_dot(QuantFormat::Q6_K, w, a1), ShapeError);
}

TEST(RefDot, KFormatsAgreeWithDequantizedDot) {
  std::mt19937_64 rng(14);
  for (int i = 0; i < 300; ++i) {
    for (auto f : {QuantFormat::Q3_K, QuantFormat::Q6_K}) {
      auto [w, a] = random_operands(f, rng, 1);
      const double want = dot_of(dequantize(w), dequantize(a));
      const double got = ref_dot(f, w, a).value;
      // The reference rounds d_w*d_a to single precision once per block.
      ASSERT_NEAR(got, want, std::ldexp(std::fabs(want), -16) + 1e-300) << format_name(f);
    }
  }
}

TEST(RefDot, IntegerPartialsAreLinearInActivations) {
  std::mt19937_64 rng(15);
  for (int i = 0; i < 200; ++i) {
    const auto w = random_q6_k(rng, 1);
    auto a = random_q8_k(rng, 1), b = random_q8_k(rng, 1), s = a;
    for (std::size_t k = 0; k < 256; ++k) {
      a[0].qs[k] = static_cast<int8_t>(a[0].qs[k] / 2);
      b[0].qs[k] = static_cast<int8_t>(b[0].qs[k] / 2);
      s[0].qs[k] = static_cast<int8_t>(a[0].qs[k] + b[0].qs[k]);
    }
    ASSERT_EQ(block_partial(w[0], s[0]), block_partial(w[0], a[0]) + block_partial(w[0], b[0]));
  }
}

// ---- serialization ----

TEST(Serialize, EncodeDecodeRoundTrip) {
  std::mt19937_64 rng(16);
  for (auto f : kWeightFormats) {
    auto [w, a] = random_operands(f, rng, 3);
    EXPECT_EQ(decode_blocks(f, encode_blocks(w)), w);
    EXPECT_EQ(decode_blocks(activation_format(f), encode_blocks(a)), a);
    EXPECT_EQ(from_fixture_line(to_fixture_line(w)), w);
  }
  EXPECT_THROW(decode_blocks(QuantFormat::Q8_0, std::vector<uint8_t>(33)), ShapeError);
  EXPECT_THROW(from_fixture_line("Q8_0 0g"), FormatError);
}

TEST(Serialize, Q8_0ByteOrder) {
  BlockQ8_0 b;
  b.d = 0x1234;
  b.qs[0] = -1;
  const auto bytes = encode_blocks(std::vector<BlockQ8_0>{b});
  EXPECT_EQ(bytes[0], 0x34);
  EXPECT_EQ(bytes[1], 0x12);
  EXPECT_EQ(bytes[2], 0xff);
}

// Fixed-seed quantization of fixed inputs, locked in tests/data. Set
// CGLASIM_REGEN_GOLDEN=1 to rewrite the file.
TEST(Golden, QuantBlocks) {
  std::vector<std::string> lines;
  std::mt19937_64 rng(20260101);
  for (auto f : {QuantFormat::FP16, QuantFormat::Q8_0, QuantFormat::Q3_K, QuantFormat::Q6_K, QuantFormat::Q8_K}) {
    for (int i = 0; i < 4; ++i) {
      const auto x = uniform_floats(rng, 256, -2, 2);
      lines.push_back(to_fixture_line(quantize(f, x)));
    }
  }
  const std::string path = testutil::source_path("tests/data/quant_blocks.txt");
  if (testutil::regenerate_golden()) {
    testutil::write_lines(path, "# FORMAT hex-payload, 256 values per line, seed 20260101\n", lines);
  }
  const auto golden = testutil::read_lines(path);
  ASSERT_EQ(golden.size(), lines.size()) << "missing golden file " << path;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    EXPECT_EQ(golden[i], lines[i]) << "line " << i;
    EXPECT_EQ(to_fixture_line(from_fixture_line(golden[i])), golden[i]);
  }
}
