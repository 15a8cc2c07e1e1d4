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

// Local-memory size sweeps and lane-scaling curves.

#ifndef CGLASIM_SWEEP_HPP_
#define CGLASIM_SWEEP_HPP_

#include <vector>

#include "cglasim/error.hpp"
#include "cglasim/machine.hpp"
#include "cglasim/perf.hpp"
#include "cglasim/planner.hpp"
#include "cglasim/workload.hpp"

namespace cglasim {

struct SweepPoint {
  double lmm_bytes = 0;
  OffloadPlan plan;
  PhaseBreakdown breakdown;
  EnergyReport energy;
};

inline std::vector<double> default_lmm_sizes() {
  std::vector<double> s;
  for (double b = kLmmMin; b <= kLmmMax; b *= 2) s.push_back(b);
  return s;
}

inline std::vector<SweepPoint> lmm_sweep(const WorkloadTrace& t, const std::vector<double>& sizes,
                                         const MachineConfig& cfg, Policy policy) {
  std::vector<SweepPoint> out;
  for (double b : sizes) {
    if (!is_power_of_two(b) || b < kLmmMin || b > kLmmMax) throw RangeError("invalid local memory size");
    MachineConfig c = cfg;
    c.lmm_bytes = b;
    SweepPoint p;
    p.lmm_bytes = b;
    p.plan = plan_offload(t, c, policy);
    p.breakdown = simulate_trace(t, p.plan, c);
    p.energy = energy_metrics(p.breakdown, c);
    out.push_back(p);
  }
  return out;
}

struct LanePoint {
  int lanes = 1;
  double latency_s = 0;
  double perf = 0;  // latency at one lane / latency
};

inline std::vector<LanePoint> lane_scaling_curve(const WorkloadTrace& t, const OffloadPlan& plan,
                                                 const MachineConfig& cfg, const std::vector<int>& lanes) {
  MachineConfig one = cfg;
  one.lanes_used = 1;
  const double base = simulate_trace(t, plan, one).total_s;
  std::vector<LanePoint> out;
  for (int l : lanes) {
    if (l < 1 || l > cfg.lanes_total) throw RangeError("lane count out of range");
    MachineConfig c = cfg;
    c.lanes_used = l;
    LanePoint p;
    p.lanes = l;
    p.latency_s = simulate_trace(t, plan, c).total_s;
    p.perf = p.latency_s > 0 ? base / p.latency_s : 1.0;
    out.push_back(p);
  }
  return out;
}

}  // namespace cglasim

#endif  // CGLASIM_SWEEP_HPP_
