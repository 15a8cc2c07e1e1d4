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

// Phase breakdowns, latency and energy for a trace under an offload plan.

#ifndef CGLASIM_PERF_HPP_
#define CGLASIM_PERF_HPP_

#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <tuple>

#include <json.hpp>

#include "cglasim/kernels.hpp"
#include "cglasim/machine.hpp"
#include "cglasim/plan.hpp"
#include "cglasim/workload.hpp"

namespace cglasim {

enum class Phase : uint8_t { Host, Load, Exec, Drain, Conf, Regv, Range };
inline constexpr std::array<Phase, 7> kPhases = {Phase::Host, Phase::Load, Phase::Exec, Phase::Drain,
                                                 Phase::Conf, Phase::Regv, Phase::Range};

constexpr std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::Host: return "HOST";
    case Phase::Load: return "LOAD";
    case Phase::Exec: return "EXEC";
    case Phase::Drain: return "DRAIN";
    case Phase::Conf: return "CONF";
    case Phase::Regv: return "REGV";
    case Phase::Range: return "RANGE";
  }
  return "?";
}

struct PhaseTimes {
  std::array<double, 7> s{};

  double& operator[](Phase p) { return s[static_cast<std::size_t>(p)]; }
  double operator[](Phase p) const { return s[static_cast<std::size_t>(p)]; }
  double total() const {
    double t = 0;
    for (double v : s) t += v;
    return t;
  }
  double other() const { return (*this)[Phase::Conf] + (*this)[Phase::Regv] + (*this)[Phase::Range]; }
  PhaseTimes& operator+=(const PhaseTimes& o) {
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += o.s[i];
    return *this;
  }
};

struct PhaseBreakdown {
  PhaseTimes prefill;
  PhaseTimes decode;
  // Exposed accelerator seconds (LOAD + EXEC + DRAIN) attributed per format.
  FormatMap accel_s;
  double total_s = 0;

  PhaseTimes combined() const {
    PhaseTimes t = prefill;
    t += decode;
    return t;
  }
  const PhaseTimes& stage(Stage st) const { return st == Stage::Prefill ? prefill : decode; }
};

struct EnergyReport {
  double latency_s = 0;
  double avg_power_w = 0;
  double pdp_j = 0;
  double edp_js = 0;
};

// Flat-power report, as used for reference devices.
inline EnergyReport energy_report(double latency_s, double watts) {
  EnergyReport e;
  e.latency_s = latency_s;
  e.avg_power_w = watts;
  e.pdp_j = latency_s * watts;
  e.edp_js = e.pdp_j * latency_s;
  return e;
}

namespace detail {

struct GroupAccum {
  OverlapChain chain;
  FormatMap raw;  // unexposed accelerator time per format in this group
};

inline double resident_weight_bytes(const WorkloadTrace& t, const OffloadPlan& plan) {
  double bytes = 0;
  for (std::size_t i = 0; i < t.calls.size(); ++i) {
    const auto& c = t.calls[i];
    if (c.stage != Stage::Prefill || c.role == "attn_score" || c.role == "attn_value") continue;
    if (!plan.offloaded(i, c)) continue;
    bytes += describe_kernel(c.format).weight_bytes(static_cast<double>(c.cols)) *
             static_cast<double>(c.rows) * static_cast<double>(c.groups);
  }
  return bytes;
}

}  // namespace detail

// Offloaded calls stream tiles through the double-buffered local memories;
// consecutive offloaded calls of one layer pass share one overlap chain.
// Accelerator durations divide by the active lanes; host-serialized work per
// offloaded call grows by contention_penalty for each lane beyond the first.
inline PhaseBreakdown simulate_trace(const WorkloadTrace& trace, const OffloadPlan& plan,
                                     const MachineConfig& cfg) {
  validate(cfg);
  PhaseBreakdown bd;
  const double lanes = cfg.lanes_used;
  const double serial = cfg.host.serial_s_per_offload * (1.0 + cfg.host.contention_penalty * (lanes - 1.0));
  const double resident = detail::resident_weight_bytes(trace, plan);
  const double overflow =
      resident > cfg.dma.buffer_bytes ? (resident - cfg.dma.buffer_bytes) / resident : 0.0;

  for (const auto& h : trace.host_tasks) {
    auto it = cfg.host.task_s.find(h.kind);
    const double per = it == cfg.host.task_s.end() ? 0.0 : it->second;
    PhaseTimes& pt = h.stage == Stage::Prefill ? bd.prefill : bd.decode;
    pt[Phase::Host] += per * cfg.host.task_scale * h.units;
  }

  detail::GroupAccum group;
  std::tuple<Stage, int64_t, int64_t> key{Stage::Prefill, -2, -2};
  Stage group_stage = Stage::Prefill;
  auto flush = [&] {
    if (group.chain.empty()) return;
    const OverlapResult r = group.chain.finish();
    PhaseTimes& pt = group_stage == Stage::Prefill ? bd.prefill : bd.decode;
    pt[Phase::Load] += r.load_s;
    pt[Phase::Exec] += r.exec_s;
    pt[Phase::Drain] += r.drain_s;
    double raw_total = 0;
    for (const auto& [f, v] : group.raw) raw_total += v;
    if (raw_total > 0) {
      for (const auto& [f, v] : group.raw) bd.accel_s[f] += r.total_s * v / raw_total;
    }
    group.raw.clear();
  };

  for (std::size_t i = 0; i < trace.calls.size(); ++i) {
    const KernelCall& c = trace.calls[i];
    PhaseTimes& pt = c.stage == Stage::Prefill ? bd.prefill : bd.decode;
    if (!plan.offloaded(i, c)) {
      pt[Phase::Host] += c.macs() * lookup(cfg.host.op_s, c.format);
      continue;
    }
    const std::tuple<Stage, int64_t, int64_t> k{c.stage, c.step, c.layer};
    if (k != key) {
      flush();
      key = k;
      group_stage = c.stage;
    }
    const KernelDescriptor kd = describe_kernel(c.format);
    const Tiling t = tile_call(c, kd, cfg);
    if (t.tiles <= 0) continue;
    const bool co = cfg.dma.coalesce;
    double load = dma_time_uniform(t.load_bytes, kd.load_regions(), co, Direction::Load, cfg);
    load += overflow * t.weight_bytes / cfg.dma.restage_Bps;
    const double drain = dma_time_uniform(t.drain_bytes, kd.drain_regions(), co, Direction::Drain, cfg);
    const double exec = t.cycles / cfg.clock_hz;
    const Step s{load / lanes, exec / lanes, drain / lanes};
    group.chain.add(s, t.tiles);
    group.raw[c.format] += t.tiles * (s.load_s + s.exec_s + s.drain_s);
    pt[Phase::Conf] += pio_time(PioKind::Conf, kd, cfg);
    pt[Phase::Regv] += t.tiles * pio_time(PioKind::Regv, kd, cfg);
    pt[Phase::Range] += t.tiles * pio_time(PioKind::Range, kd, cfg);
    pt[Phase::Host] += serial;
  }
  flush();
  bd.total_s = bd.prefill.total() + bd.decode.total();
  return bd;
}

// Host-driven phases draw host_active_watts; accelerator phases draw
// power_of(format) for the format that occupied them.
inline EnergyReport energy_metrics(const PhaseBreakdown& bd, const MachineConfig& cfg) {
  EnergyReport e;
  e.latency_s = bd.total_s;
  if (bd.total_s <= 0) return e;
  const PhaseTimes all = bd.combined();
  double joules = (all[Phase::Host] + all.other()) * cfg.power.host_active_watts;
  double accel_attr = 0;
  for (const auto& [f, s] : bd.accel_s) {
    joules += s * power_of(f, cfg);
    accel_attr += s;
  }
  const double accel = all[Phase::Load] + all[Phase::Exec] + all[Phase::Drain];
  if (accel > accel_attr) joules += (accel - accel_attr) * cfg.power.host_active_watts;
  e.avg_power_w = joules / bd.total_s;
  e.pdp_j = e.latency_s * e.avg_power_w;
  e.edp_js = e.pdp_j * e.latency_s;
  return e;
}

inline nlohmann::ordered_json to_json(const PhaseTimes& p) {
  nlohmann::ordered_json j;
  for (auto ph : kPhases) j[std::string(phase_name(ph))] = p[ph];
  j["OTHER"] = p.other();
  j["total"] = p.total();
  return j;
}

inline nlohmann::ordered_json to_json(const PhaseBreakdown& b) {
  nlohmann::ordered_json j;
  j["prefill"] = to_json(b.prefill);
  j["decode"] = to_json(b.decode);
  j["all"] = to_json(b.combined());
  j["accel_s"] = detail::format_map_json(b.accel_s);
  j["total_s"] = b.total_s;
  return j;
}

inline nlohmann::ordered_json to_json(const EnergyReport& e) {
  return {{"latency_s", e.latency_s}, {"avg_power_w", e.avg_power_w}, {"pdp_j", e.pdp_j}, {"edp_js", e.edp_js}};
}

}  // namespace cglasim

#endif  // CGLASIM_PERF_HPP_
