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

// Reference scenarios used to fit and check machine profiles.

#ifndef CGLASIM_CALIB_HPP_
#define CGLASIM_CALIB_HPP_

#include <cmath>
#include <limits>
#include <utility>

#include "cglasim/error.hpp"
#include "cglasim/kernels.hpp"
#include "cglasim/machine.hpp"
#include "cglasim/plan.hpp"
#include "cglasim/workload.hpp"

namespace cglasim {

struct TransferMix {
  TransferPlan load;
  TransferPlan drain;
};

// One Q8_0 decode tile of a 2048x1024 projection. LOAD gathers
// weight quants, weight scales, activation quants and activation scales;
// DRAIN returns one result buffer per replica and execution.
inline TransferMix reference_transfer_mix(const MachineConfig& cfg) {
  const KernelCall call{QuantFormat::Q8_0, "attn_q", Stage::Decode, 1, 0, 1, 2048, 1024, 1};
  const KernelDescriptor k = describe_kernel(QuantFormat::Q8_0);
  MachineConfig c = cfg;
  c.lmm_bytes = kLmmReference;
  const Tiling t = tile_call(call, k, c);
  const double wq = t.rows * 1024.0, wd = t.rows * 1024.0 / 32 * 2;
  const double aq = t.tokens * 1024.0, ad = t.tokens * 1024.0 / 32 * 2;
  TransferMix m;
  m.load.direction = Direction::Load;
  double off = 0;
  for (double len : {wq, wd, aq, ad}) {
    const double part = len / k.lmm_stripes;
    for (int s = 0; s < k.lmm_stripes; ++s) {
      m.load.buffers.push_back({off, part});
      off += part;
    }
  }
  m.drain.direction = Direction::Drain;
  const double each = t.drain_bytes / k.drain_regions();
  for (int i = 0; i < k.drain_regions(); ++i) m.drain.buffers.push_back({i * each, each});
  return m;
}

inline double coalescing_speedup(const TransferPlan& p, const MachineConfig& cfg) {
  TransferPlan naive = p, co = p;
  naive.coalesced = false;
  co.coalesced = true;
  return dma_time(naive, cfg) / dma_time(co, cfg);
}

// Solves setup_s and gather_Bps so the mix shows the requested naive /
// coalesced ratios, given both bandwidths.
inline std::pair<double, double> solve_coalescing(const TransferMix& m, const MachineConfig& cfg,
                                                  double load_ratio, double drain_ratio) {
  auto totals = [](const TransferPlan& p) {
    double s = 0;
    for (const auto& b : p.buffers) s += b.length;
    return s;
  };
  const double tl = totals(m.load), td = totals(m.drain);
  const double nl = static_cast<double>(m.load.buffers.size());
  const double nd = static_cast<double>(m.drain.buffers.size());
  const double bl = cfg.dma.rate(false), bd = cfg.dma.rate(true);
  // (n - r) S - r T u = (r - 1) T / B, with u = 1 / gather.
  const double a11 = nl - load_ratio, a12 = -load_ratio * tl, b1 = (load_ratio - 1) * tl / bl;
  const double a21 = nd - drain_ratio, a22 = -drain_ratio * td, b2 = (drain_ratio - 1) * td / bd;
  const double det = a11 * a22 - a12 * a21;
  if (det == 0) throw ConfigError("dma: singular coalescing fit");
  const double s = (b1 * a22 - a12 * b2) / det;
  const double u = (a11 * b2 - a21 * b1) / det;
  if (!(s >= 0) || !(u >= 0)) throw ConfigError("dma: coalescing ratios unreachable for this mix");
  return {s, u > 0 ? 1.0 / u : std::numeric_limits<double>::infinity()};
}

}  // namespace cglasim

#endif  // CGLASIM_CALIB_HPP_
