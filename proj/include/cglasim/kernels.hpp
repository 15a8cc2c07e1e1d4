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

// Dot-product dataflows as mapped onto the linear PE array.

#ifndef CGLASIM_KERNELS_HPP_
#define CGLASIM_KERNELS_HPP_

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cglasim/error.hpp"
#include "cglasim/half.hpp"
#include "cglasim/isa.hpp"
#include "cglasim/quant.hpp"

namespace cglasim {

struct CycleParams {
  double issue_interval = 1.0;
  // 0 means "use the descriptor's replication".
  double replication_effective = 0.0;
};

struct KernelDescriptor {
  QuantFormat format = QuantFormat::FP16;
  int arith_units = 0;
  int pe_stages = 0;
  int replication = 1;
  int elems_per_burst = 0;
  int iterations_per_burst = 1;
  int pe_used = 0;
  // PEs whose local memories hold the streamed tile.
  int lmm_stripes = 1;
  // Host buffers gathered per tile load, and result buffers per tile drain.
  int input_arrays = 2;
  int output_arrays = 1;

  // Separate DMA transactions per tile without coalescing: each array is
  // scattered over the stripes' local memories.
  int load_regions() const { return input_arrays * lmm_stripes; }
  int drain_regions() const { return output_arrays * lmm_stripes; }

  // Bytes of weights for a row of `cols` elements.
  double weight_bytes(double cols) const {
    return std::ceil(cols / block_elems(format)) * block_bytes(format);
  }
  // Bytes of the activation vector for `cols` elements.
  double act_bytes(double cols) const {
    const QuantFormat a = activation_format(format);
    const double unit = a == QuantFormat::FP16 ? 16.0 : static_cast<double>(block_elems(a));
    return std::ceil(cols / unit) * block_bytes(a);
  }
  static constexpr double kOutBytes = 4.0;

  // Bytes per PE for a double-buffered tile of `rows` x `tokens`.
  double lmm_footprint(double cols, double rows, double tokens) const {
    if (cols <= 0 || rows <= 0 || tokens <= 0) return 0.0;
    const double tile = rows * weight_bytes(cols) + tokens * act_bytes(cols) + rows * tokens * kOutBytes;
    return 2.0 * tile / lmm_stripes;
  }
};

inline KernelDescriptor describe_kernel(QuantFormat f) {
  KernelDescriptor k;
  k.format = f;
  switch (f) {
    case QuantFormat::FP16:
      k.arith_units = 22;
      k.pe_stages = 11;
      k.replication = 1;
      k.elems_per_burst = 16;
      k.iterations_per_burst = 1;
      k.pe_used = 11;
      k.lmm_stripes = 11;
      k.input_arrays = 2;
      k.output_arrays = 1;
      return k;
    case QuantFormat::Q8_0:
      k.arith_units = 46;
      k.pe_stages = 12;
      k.replication = 4;
      k.elems_per_burst = 32;
      k.iterations_per_burst = 1;
      k.pe_used = 48;
      k.lmm_stripes = 48;
      k.input_arrays = 4;
      k.output_arrays = 8;
      return k;
    case QuantFormat::Q3_K:
      k.arith_units = 51;
      k.pe_stages = 13;
      k.replication = 4;
      k.elems_per_burst = 256;
      k.iterations_per_burst = 16;
      k.pe_used = 52;
      k.lmm_stripes = 52;
      k.input_arrays = 6;
      k.output_arrays = 4;
      return k;
    case QuantFormat::Q6_K:
      k.arith_units = 64;
      k.pe_stages = 16;
      k.replication = 4;
      k.elems_per_burst = 256;
      k.iterations_per_burst = 16;
      k.pe_used = 64;
      k.lmm_stripes = 4;
      k.input_arrays = 6;
      k.output_arrays = 4;
      return k;
    case QuantFormat::Q8_K:
      break;
  }
  throw UnsupportedFormat("no kernel for " + std::string(format_name(f)));
}

inline double bursts_for(const KernelDescriptor& k, double n_elems, const CycleParams& p = {}) {
  const double rep = p.replication_effective > 0 ? p.replication_effective : k.replication;
  return std::ceil(n_elems / (k.elems_per_burst * rep));
}

inline double cycles_for(const KernelDescriptor& k, double n_elems, const CycleParams& p = {}) {
  return k.pe_stages + bursts_for(k, n_elems, p) * p.issue_interval * k.iterations_per_burst;
}

struct DotResult {
  double value = 0.0;
  std::vector<int64_t> integer_partials;
  double cycles = 0.0;
  int pe_used = 0;
  int arith_units = 0;
};

class KernelFault : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

inline void check_no_wrap(int64_t v) {
  if (v >= (int64_t{1} << 23) || v < -(int64_t{1} << 23)) {
    throw KernelFault("24-bit accumulation chain out of range");
  }
}

// Sums 8-bit products with SML8, then chains AD24, folding both lanes at the
// end. Each lane covers every other group of four elements.
template <class WAt, class AAt>
int64_t int8_flow(std::size_t n, WAt w, AAt a) {
  PEWord acc{};
  int64_t shadow = 0;
  for (std::size_t e = 0; e < n; e += 8) {
    const PEWord wv = PEWord::from_lanes(pack_i8x4(w(e), w(e + 1), w(e + 2), w(e + 3)),
                                         pack_i8x4(w(e + 4), w(e + 5), w(e + 6), w(e + 7)));
    const PEWord av = PEWord::from_lanes(pack_i8x4(a(e), a(e + 1), a(e + 2), a(e + 3)),
                                         pack_i8x4(a(e + 4), a(e + 5), a(e + 6), a(e + 7)));
    const PEWord prod = op_sml8(wv, av);
    shadow += sx24(prod.lane(0));
    check_no_wrap(shadow);
    shadow += sx24(prod.lane(1));
    check_no_wrap(shadow);
    acc = op_ad24(acc, prod);
  }
  const PEWord swapped = PEWord::from_lanes(acc.lane(1), 0);
  const PEWord total = op_ad24(acc, swapped);
  const int64_t p = sx24(total.lane(0));
  if (p != shadow) throw KernelFault("24-bit accumulation wrapped");
  return p;
}

template <class W>
const W& get_as(const QuantTensor& t, QuantFormat f, const char* what) {
  if (format_of(t) != f) {
    throw FormatError(std::string(what) + " must be " + std::string(format_name(f)));
  }
  return std::get<W>(t);
}

inline DotResult exec_q8_0(const std::vector<BlockQ8_0>& wb, const std::vector<BlockQ8_0>& ab) {
  DotResult r;
  float acc = 0.0f;
  for (std::size_t b = 0; b < wb.size(); ++b) {
    const auto& w = wb[b];
    const auto& a = ab[b];
    const int64_t p = int8_flow(32, [&](std::size_t i) { return w.qs[i]; },
                                [&](std::size_t i) { return a.qs[i]; });
    r.integer_partials.push_back(p);
    const float scale = f16_to_f32(w.d) * f16_to_f32(a.d);
    acc = lane_f32(op_fma32x2(pack_f32x2(scale, 0), pack_f32x2(static_cast<float>(p), 0),
                              pack_f32x2(acc, 0)), 0);
  }
  r.value = acc;
  return r;
}

inline DotResult exec_q6_k(const std::vector<BlockQ6_K>& wb, const std::vector<BlockQ8Act>& ab) {
  DotResult r;
  double acc = 0.0;
  for (std::size_t b = 0; b < wb.size(); ++b) {
    const auto& w = wb[b];
    const auto& a = ab[b];
    int32_t lane_acc[2] = {0, 0};
    for (std::size_t e = 0; e < 256; e += 4) {
      uint32_t cv_in[2], sc_in[2], act[2];
      for (int l = 0; l < 2; ++l) {
        const std::size_t e0 = e + 2 * l, e1 = e0 + 1;
        const uint32_t nib = w.low4(e0) | (w.low4(e1) << 4);
        const uint32_t crumbs = w.high2(e0) | (w.high2(e1) << 2);
        cv_in[l] = nib | (crumbs << 8);
        sc_in[l] = static_cast<uint8_t>(w.scales[e0 / 16]);
        act[l] = pack_i8x4(a.qs[e0], a.qs[e1], 0, 0);
      }
      const PEWord mid = op_cvt86(PEWord::from_lanes(cv_in[0], cv_in[1]),
                                  PEWord::from_lanes(sc_in[0], sc_in[1]));
      const PEWord prod = op_sml16(mid, PEWord::from_lanes(act[0], act[1]));
      lane_acc[0] += static_cast<int32_t>(prod.lane(0));
      lane_acc[1] += static_cast<int32_t>(prod.lane(1));
    }
    const int64_t p = static_cast<int64_t>(lane_acc[0]) + lane_acc[1];
    r.integer_partials.push_back(p);
    acc += static_cast<double>(scale_product(w.d, a.d)) * static_cast<double>(p);
  }
  r.value = acc;
  return r;
}

// CVT53 front end converts scales to 5 bits and weights to 3 bits; the
// product s5*q3 fits in 8 bits and enters the INT8 flow. The dropped factor
// of two is restored once per super-block through 2*d.
inline DotResult exec_q3_k(const std::vector<BlockQ3_K>& wb, const std::vector<BlockQ8Act>& ab) {
  DotResult r;
  double acc = 0.0;
  for (std::size_t b = 0; b < wb.size(); ++b) {
    const auto& w = wb[b];
    const auto& a = ab[b];
    std::array<uint8_t, 16> codes{};
    for (std::size_t j = 0; j < 16; ++j) codes[j] = static_cast<uint8_t>(w.scale_code(j));
    std::array<uint8_t, 64> qs2{};
    std::array<uint8_t, 32> qh1{};
    for (std::size_t e = 0; e < 256; ++e) {
      qs2[e / 4] = static_cast<uint8_t>(qs2[e / 4] | (w.low2(e) << (2 * (e % 4))));
      qh1[e / 8] = static_cast<uint8_t>(qh1[e / 8] | (w.high1(e) << (e % 8)));
    }
    const Cvt53Out cv = op_cvt53(codes, qs2, qh1);
    std::array<int8_t, 256> w8{};
    for (std::size_t e = 0; e < 256; ++e) {
      w8[e] = static_cast<int8_t>(cv.scales5[e / 16] * unpack_q3(cv.q3, e));
    }
    const int64_t p = int8_flow(256, [&](std::size_t i) { return w8[i]; },
                                [&](std::size_t i) { return a.qs[i]; });
    r.integer_partials.push_back(p);
    const float d2 = 2.0f * f16_to_f32(w.d);
    acc += static_cast<double>(d2 * a.d) * static_cast<double>(p);
  }
  r.value = acc;
  return r;
}

// Each 16-element burst runs two FMA chains (even and odd elements in the
// two lanes) and folds them. Bursts are spread over `slots` accumulator
// slots; the final reduction always walks bursts in ascending order.
inline DotResult exec_fp16(const Fp16Vec& w, const Fp16Vec& a, int slots) {
  DotResult r;
  const std::size_t n = w.values.size();
  const std::size_t bursts = n / 16;
  const std::size_t k = static_cast<std::size_t>(slots < 1 ? 1 : slots);
  std::vector<std::vector<float>> slot_partials(k);
  for (std::size_t b = 0; b < bursts; ++b) {
    PEWord acc = pack_f32x2(0.0f, 0.0f);
    for (std::size_t i = 16 * b; i < 16 * b + 16; i += 2) {
      const PEWord wv = pack_f32x2(f16_to_f32(w.values[i]), f16_to_f32(w.values[i + 1]));
      const PEWord av = pack_f32x2(f16_to_f32(a.values[i]), f16_to_f32(a.values[i + 1]));
      acc = op_fma32x2(wv, av, acc);
    }
    slot_partials[b % k].push_back(lane_f32(acc, 0) + lane_f32(acc, 1));
  }
  float total = 0.0f;
  for (std::size_t b = 0; b < bursts; ++b) total += slot_partials[b % k][b / k];
  r.value = total;
  return r;
}

}  // namespace detail

struct ExecOptions {
  CycleParams cycle;
  // Column-multithreading interleave of the FP16 dataflow.
  int fp16_slots = 4;
};

inline DotResult exec_dot(QuantFormat f, const QuantTensor& w, const QuantTensor& a,
                          const ExecOptions& opt = {}) {
  const KernelDescriptor k = describe_kernel(f);
  if (format_of(w) != f) throw FormatError("weights are not " + std::string(format_name(f)));
  if (format_of(a) != activation_format(f)) {
    throw FormatError("activations for " + std::string(format_name(f)) + " must be " +
                      std::string(format_name(activation_format(f))));
  }
  const std::size_t n = element_count(w);
  if (n != element_count(a)) throw ShapeError("element counts differ");
  if (n % block_elems(f) != 0) throw ShapeError("length is not a whole number of bursts");
  DotResult r;
  switch (f) {
    case QuantFormat::FP16:
      r = detail::exec_fp16(std::get<Fp16Vec>(w), std::get<Fp16Vec>(a), opt.fp16_slots);
      break;
    case QuantFormat::Q8_0:
      r = detail::exec_q8_0(std::get<std::vector<BlockQ8_0>>(w), std::get<std::vector<BlockQ8_0>>(a));
      break;
    case QuantFormat::Q3_K:
      r = detail::exec_q3_k(std::get<std::vector<BlockQ3_K>>(w), std::get<std::vector<BlockQ8Act>>(a));
      break;
    case QuantFormat::Q6_K:
      r = detail::exec_q6_k(std::get<std::vector<BlockQ6_K>>(w), std::get<std::vector<BlockQ8Act>>(a));
      break;
    case QuantFormat::Q8_K:
      throw UnsupportedFormat("Q8_K is an activation format");
  }
  r.cycles = cycles_for(k, static_cast<double>(n), opt.cycle);
  r.pe_used = k.pe_used;
  r.arith_units = k.arith_units;
  return r;
}

struct MatVecResult {
  std::vector<double> values;
  double total_cycles = 0.0;
  double bursts = 0.0;
};

// Rows run one after another within a lane.
inline MatVecResult exec_matvec(QuantFormat f, const std::vector<QuantTensor>& rows,
                                const QuantTensor& acts, const ExecOptions& opt = {}) {
  MatVecResult m;
  if (rows.empty()) return m;
  const std::size_t n = element_count(rows.front());
  for (const auto& row : rows) {
    if (element_count(row) != n) throw ShapeError("ragged matrix");
  }
  const KernelDescriptor k = describe_kernel(f);
  for (const auto& row : rows) {
    const DotResult d = exec_dot(f, row, acts, opt);
    m.values.push_back(d.value);
    m.total_cycles += d.cycles;
    m.bursts += bursts_for(k, static_cast<double>(n), opt.cycle);
  }
  return m;
}

}  // namespace cglasim

#endif  // CGLASIM_KERNELS_HPP_
