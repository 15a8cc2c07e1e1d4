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

// Fits the shipped machine profiles. The FPGA profile is fitted to the
// reference breakdown; the 28 nm profile shares it with the faster clock.
// Host per-operation costs and the local-memory power slope are then chosen
// inside the windows that reproduce the offload and sweep observations.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cglasim/calib.hpp"
#include "cglasim/machine.hpp"
#include "cglasim/perf.hpp"
#include "cglasim/planner.hpp"
#include "cglasim/sweep.hpp"
#include "cglasim/workload.hpp"

using namespace cglasim;

namespace {

struct Targets {
  double host = 5.43, load = 5.31, exec = 4.47, drain = 0.31, other = 0.78;
};

// Fraction of 1-lane accelerator time that the added host contention of one
// extra lane costs; lane curves peak at two lanes for values in (1/6, 1/2).
constexpr double kLaneShare = 0.2;
// Fraction of HOST spent on per-offload serialized work at two lanes.
constexpr double kSerialShare = 0.9;

MachineConfig seed_profile() {
  MachineConfig c;
  c.name = "imax3-fpga";
  c.lanes_total = 8;
  c.lanes_used = 2;
  c.pes_per_lane = 64;
  c.lmm_bytes = kLmmReference;
  c.clock_hz = 145e6;
  c.dma.setup_s = 1e-5;
  c.dma.bandwidth_Bps = 1e9;
  c.dma.drain_bandwidth_Bps = 1e9;
  c.dma.coalesce = true;
  c.dma.buffer_bytes = 4.0 * 1024 * 1024 * 1024;
  c.dma.restage_Bps = 1.0e9;
  c.pio.word_s = 1e-7;
  using F = QuantFormat;
  c.pio.conf_words = {{F::FP16, 160}, {F::Q8_0, 240}, {F::Q3_K, 480}, {F::Q6_K, 320}};
  c.pio.regv_words = {{F::FP16, 88}, {F::Q8_0, 384}, {F::Q3_K, 416}, {F::Q6_K, 1024}};
  c.pio.range_words = {{F::FP16, 6}, {F::Q8_0, 24}, {F::Q3_K, 20}, {F::Q6_K, 20}};
  c.power.kernel_watts = {{F::FP16, 2.16}, {F::Q8_0, 4.41}, {F::Q3_K, 4.88}, {F::Q6_K, 6.1}};
  c.power.lmm_watts_per_byte = 0;
  c.power.host_idle_watts = 0.5;
  c.power.host_active_watts = 2.0;
  c.host.task_s = {{HostKind::Tokenize, 2e-4}, {HostKind::Embed, 2e-9},  {HostKind::RmsNorm, 4e-9},
                   {HostKind::Rope, 8e-9},     {HostKind::Softmax, 1e-8}, {HostKind::Swiglu, 6e-9},
                   {HostKind::KvManage, 3e-9}};
  c.host.task_scale = 1.0;
  c.host.serial_s_per_offload = 1e-4;
  c.host.contention_penalty = 1.0;
  c.host.op_s = {{F::FP16, 5e-9}, {F::Q8_0, 1e-9}, {F::Q3_K, 1e-9}, {F::Q6_K, 1e-9}};
  return c;
}

void print_bd(const char* tag, const PhaseBreakdown& bd) {
  const PhaseTimes a = bd.combined();
  std::printf("%s HOST %.4f LOAD %.4f EXEC %.4f DRAIN %.4f OTHER %.4f total %.4f\n", tag, a[Phase::Host],
              a[Phase::Load], a[Phase::Exec], a[Phase::Drain], a.other(), bd.total_s);
}

// Closed-form updates for everything except the two DMA bandwidths.
PhaseTimes settle(MachineConfig& c, const WorkloadTrace& t, const OffloadPlan& plan, const Targets& tg,
                  double n_calls) {
  auto [s, g] = solve_coalescing(reference_transfer_mix(c), c, 1.2, 4.8);
  c.dma.setup_s = s;
  c.dma.gather_Bps = g;
  MachineConfig bare = c;
  bare.host.task_scale = 0;
  bare.host.serial_s_per_offload = 0;
  PhaseTimes a = simulate_trace(t, plan, bare).combined();
  for (int k = 0; k < 4; ++k) {
    c.cycle.issue_interval *= tg.exec / a[Phase::Exec];
    c.pio.word_s *= tg.other / a.other();
    bare.cycle = c.cycle;
    bare.pio = c.pio;
    a = simulate_trace(t, plan, bare).combined();
  }
  const double lanes = c.lanes_used;
  const double accel_1lane = (a[Phase::Load] + a[Phase::Exec] + a[Phase::Drain]) * lanes;
  // Serialized host work X at one lane grows to X (1 + p (L - 1)).
  const double serial_total = kSerialShare * tg.host;
  const double xp = kLaneShare * accel_1lane;
  // Clamped while iterating; the final fit is checked by the caller.
  const double x = std::max(serial_total - xp * (lanes - 1.0), 1e-3 * serial_total);
  c.host.serial_s_per_offload = x / n_calls;
  c.host.contention_penalty = xp / x;
  MachineConfig unit = bare;
  unit.host.task_scale = 1.0;
  const double tasks = simulate_trace(t, plan, unit).combined()[Phase::Host];
  c.host.task_scale = (tg.host - serial_total) / tasks;
  return a;
}

void fit_breakdown(MachineConfig& c, const WorkloadTrace& t, const OffloadPlan& plan, const Targets& tg) {
  double n_calls = 0;
  for (std::size_t i = 0; i < t.calls.size(); ++i) n_calls += plan.offloaded(i, t.calls[i]) ? 1 : 0;
  auto residual = [&](double lb, double ld, MachineConfig& m) {
    m.dma.bandwidth_Bps = std::pow(10.0, lb);
    m.dma.drain_bandwidth_Bps = std::pow(10.0, ld);
    const PhaseTimes a = settle(m, t, plan, tg, n_calls);
    return std::array<double, 2>{std::log(a[Phase::Load] / tg.load), std::log(a[Phase::Drain] / tg.drain)};
  };
  double lb = 9.5, ld = 7.0;
  for (int it = 0; it < 60; ++it) {
    MachineConfig m = c;
    const auto r = residual(lb, ld, m);
    c = m;
    std::printf("fit %2d  log10 B %.4f  log10 Bd %.4f  residual %.2e %.2e\n", it, lb, ld, r[0], r[1]);
    if (std::fabs(r[0]) < 1e-7 && std::fabs(r[1]) < 1e-7) break;
    const double h = 1e-4;
    MachineConfig m1 = c, m2 = c;
    const auto r1 = residual(lb + h, ld, m1);
    const auto r2 = residual(lb, ld + h, m2);
    const double j11 = (r1[0] - r[0]) / h, j21 = (r1[1] - r[1]) / h;
    const double j12 = (r2[0] - r[0]) / h, j22 = (r2[1] - r[1]) / h;
    const double det = j11 * j22 - j12 * j21;
    double dl = -(r[0] * j22 - j12 * r[1]) / det;
    double dd = -(j11 * r[1] - j21 * r[0]) / det;
    const double step = std::max(std::fabs(dl), std::fabs(dd));
    if (step > 0.25) {
      dl *= 0.25 / step;
      dd *= 0.25 / step;
    }
    lb += dl;
    ld += dd;
  }
  MachineConfig m = c;
  residual(lb, ld, m);
  c = m;
  const PhaseTimes a = simulate_trace(t, plan, c).combined();
  if (std::fabs(a[Phase::Host] / tg.host - 1.0) > 1e-6) throw ConfigError("host: lane target unreachable");
}

struct Row {
  std::string file;
  std::map<QuantFormat, bool> pattern;
};

std::vector<Row> table_rows() {
  using F = QuantFormat;
  return {
      {"qwen3-0.6b-q3ks.json", {{F::FP16, true}, {F::Q3_K, false}, {F::Q6_K, true}}},
      {"qwen3-0.6b-q8_0.json", {{F::FP16, true}, {F::Q8_0, true}}},
      {"qwen3-1.7b-q3ks.json", {{F::FP16, true}, {F::Q3_K, true}, {F::Q6_K, false}}},
      {"qwen3-1.7b-q8_0.json", {{F::FP16, true}, {F::Q8_0, true}}},
      {"qwen3-8b-q3ks.json", {{F::FP16, true}, {F::Q3_K, true}, {F::Q6_K, false}}},
      {"qwen3-8b-q8_0.json", {{F::FP16, true}, {F::Q8_0, false}}},
  };
}

// PDP of a fixed plan is linear in the host per-operation costs and in the
// local-memory power slope: pdp = a + b * slope + sum_f c_f * op_s[f].
struct Entry {
  int model = 0;
  int size = 0;
  unsigned mask = 0;
  double a = 0, b = 0;
  std::array<double, 4> c{};
};

struct Space {
  std::vector<double> sizes;
  std::vector<Entry> entries;
  std::vector<unsigned> pattern;  // per model
  int ref_size = 0;
};

Space build_space(const MachineConfig& base, const std::string& dir, int n_in, int n_out) {
  Space sp;
  sp.sizes = default_lmm_sizes();
  for (std::size_t i = 0; i < sp.sizes.size(); ++i) {
    if (sp.sizes[i] == kLmmReference) sp.ref_size = static_cast<int>(i);
  }
  const auto rows = table_rows();
  for (std::size_t mi = 0; mi < rows.size(); ++mi) {
    const WorkloadTrace t = build_trace(load_model_config(dir + "/" + rows[mi].file), n_in, n_out);
    unsigned pat = 0;
    for (std::size_t b = 0; b < kWeightFormats.size(); ++b) {
      auto it = rows[mi].pattern.find(kWeightFormats[b]);
      if (it != rows[mi].pattern.end() && it->second) pat |= 1u << b;
    }
    sp.pattern.push_back(pat);
    std::array<double, 4> macs{};
    for (const auto& call : t.calls) {
      for (std::size_t b = 0; b < 4; ++b) macs[b] += call.format == kWeightFormats[b] ? call.macs() : 0;
    }
    for (std::size_t si = 0; si < sp.sizes.size(); ++si) {
      MachineConfig c = base;
      c.lmm_bytes = sp.sizes[si];
      for (auto f : kWeightFormats) c.host.op_s[f] = 0;
      const auto feasible = capacity_feasible(t, c);
      unsigned allowed = 0;
      for (std::size_t b = 0; b < 4; ++b) {
        auto it = feasible.find(kWeightFormats[b]);
        if (it != feasible.end() && it->second) allowed |= 1u << b;
      }
      for (unsigned mask = 0; mask < 16; ++mask) {
        if ((mask & ~allowed) != 0) continue;
        OffloadPlan p;
        for (std::size_t b = 0; b < 4; ++b) p.per_type[kWeightFormats[b]] = (mask >> b) & 1u;
        Entry e;
        e.model = static_cast<int>(mi);
        e.size = static_cast<int>(si);
        e.mask = mask;
        c.power.lmm_watts_per_byte = 0;
        const PhaseBreakdown bd = simulate_trace(t, p, c);
        e.a = energy_metrics(bd, c).pdp_j;
        c.power.lmm_watts_per_byte = 1e-7;
        e.b = (energy_metrics(bd, c).pdp_j - e.a) / 1e-7;
        for (std::size_t b = 0; b < 4; ++b) {
          e.c[b] = ((mask >> b) & 1u) ? 0.0 : macs[b] * c.power.host_active_watts;
        }
        sp.entries.push_back(e);
      }
    }
  }
  return sp;
}

struct Eval {
  int hits = 0;
  bool pattern_ok = false;
  double margin = 0;
};

// best[model][size] = (pdp, mask) minimizing pdp with the fewer-types tie-break.
// Per format, the host cost interval over which flipping that format alone
// away from the table selection at 64 KiB does not lower PDP.
std::array<std::pair<double, double>, 4> flip_windows(const Space& sp) {
  std::array<std::pair<double, double>, 4> w;
  w.fill({0.0, std::numeric_limits<double>::infinity()});
  auto find = [&](int model, unsigned mask) -> const Entry* {
    for (const auto& e : sp.entries) {
      if (e.model == model && e.size == sp.ref_size && e.mask == mask) return &e;
    }
    return nullptr;
  };
  for (std::size_t m = 0; m < sp.pattern.size(); ++m) {
    const Entry* pat = find(static_cast<int>(m), sp.pattern[m]);
    if (pat == nullptr) throw ConfigError("quant_map: table selection infeasible at 64 KiB");
    for (std::size_t b = 0; b < 4; ++b) {
      const Entry* alt = find(static_cast<int>(m), sp.pattern[m] ^ (1u << b));
      if (alt == nullptr) continue;
      const double dc = alt->c[b] - pat->c[b];
      if (dc == 0) continue;
      // pat <= alt  <=>  (pat.a - alt.a) <= dc * op
      const double bound = (pat->a - alt->a) / dc;
      if (dc > 0) w[b].first = std::max(w[b].first, bound);
      else w[b].second = std::min(w[b].second, bound);
    }
  }
  return w;
}

Eval evaluate(const Space& sp, const std::array<double, 4>& op, double slope, bool need_sweep) {
  const std::size_t nm = sp.pattern.size(), ns = sp.sizes.size();
  std::vector<double> best(nm * ns, std::numeric_limits<double>::infinity());
  std::vector<double> second(nm * ns, std::numeric_limits<double>::infinity());
  std::vector<unsigned> best_mask(nm * ns, 0);
  for (const auto& e : sp.entries) {
    if (!need_sweep && e.size != sp.ref_size) continue;
    double v = e.a + e.b * slope;
    for (std::size_t b = 0; b < 4; ++b) v += e.c[b] * op[b];
    const std::size_t k = static_cast<std::size_t>(e.model) * ns + e.size;
    if (v < best[k]) {
      second[k] = best[k];
      best[k] = v;
      best_mask[k] = e.mask;
    } else if (v < second[k]) {
      second[k] = v;
    }
  }
  Eval ev;
  ev.pattern_ok = true;
  ev.margin = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < nm; ++m) {
    const std::size_t k = m * ns + sp.ref_size;
    if (best_mask[k] != sp.pattern[m]) {
      ev.pattern_ok = false;
      return ev;
    }
    if (std::isfinite(second[k])) ev.margin = std::min(ev.margin, second[k] / best[k] - 1.0);
  }
  if (!need_sweep) return ev;
  for (std::size_t m = 0; m < nm; ++m) {
    const double ref = best[m * ns + sp.ref_size];
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < ns; ++s) {
      if (static_cast<int>(s) != sp.ref_size) gap = std::min(gap, best[m * ns + s] / ref - 1.0);
    }
    if (gap > 0) {
      ++ev.hits;
      ev.margin = std::min(ev.margin, gap);
    }
  }
  return ev;
}

struct Search {
  Eval ev;
  std::array<double, 4> op{};
  double slope = 0;
};

Search search(const MachineConfig& asic, const std::string& models) {
  const Space sp = build_space(asic, models, 32, 16);
  const auto windows = flip_windows(sp);
  std::array<std::vector<double>, 4> grid;
  for (std::size_t b = 0; b < 4; ++b) {
    const double lo = std::max(windows[b].first, 1e-12);
    const double hi = std::isfinite(windows[b].second) ? windows[b].second : 30.0 * lo;
    if (!(hi > lo)) throw ConfigError("host.op_s: empty window");
    for (int i = 0; i <= 16; ++i) grid[b].push_back(lo * std::pow(hi / lo, (i + 0.5) / 17.0));
  }
  std::vector<double> slopes;
  const double slope_cap = 0.9 * lookup(asic.power.kernel_watts, QuantFormat::FP16) /
                           ((kLmmReference - kLmmMin) * asic.pes_per_lane);
  for (double e = -10.0; std::pow(10.0, e) < slope_cap; e += 0.0625) slopes.push_back(std::pow(10.0, e));
  Search best;
  best.ev.hits = -1;
  for (double o0 : grid[0]) {
    for (double o1 : grid[1]) {
      for (double o2 : grid[2]) {
        for (double o3 : grid[3]) {
          const std::array<double, 4> op{o0, o1, o2, o3};
          if (!evaluate(sp, op, 0.0, false).pattern_ok) continue;
          for (double sl : slopes) {
            const Eval ev = evaluate(sp, op, sl, true);
            if (!ev.pattern_ok) continue;
            if (ev.hits > best.ev.hits || (ev.hits == best.ev.hits && ev.margin > best.ev.margin)) {
              best.ev = ev;
              best.op = op;
              best.slope = sl;
            }
          }
        }
      }
    }
  }
  return best;
}

// The 8B Q8_0 row keeps its Q8_0 layers on the host at every swept size.
bool keeps_q8_0_on_host(const MachineConfig& c, const std::string& dir, int n_in, int n_out) {
  const WorkloadTrace t = build_trace(load_model_config(dir + "/qwen3-8b-q8_0.json"), n_in, n_out);
  for (const auto& p : lmm_sweep(t, default_lmm_sizes(), c, Policy::Pdp)) {
    if (p.plan.type_offloaded(QuantFormat::Q8_0)) return false;
  }
  return true;
}

int count_sweep_minima(const MachineConfig& c, const std::string& dir, int n_in, int n_out) {
  int hits = 0;
  for (const auto& row : table_rows()) {
    const WorkloadTrace t = build_trace(load_model_config(dir + "/" + row.file), n_in, n_out);
    const auto pts = lmm_sweep(t, default_lmm_sizes(), c, Policy::Pdp);
    auto best = std::min_element(pts.begin(), pts.end(), [](const SweepPoint& a, const SweepPoint& b) {
      return a.energy.pdp_j < b.energy.pdp_j;
    });
    if (best->lmm_bytes == kLmmReference) ++hits;
    std::printf("  %-22s", row.file.c_str());
    for (const auto& p : pts) std::printf(" %3.0fK:%8.2f", p.lmm_bytes / 1024, p.energy.pdp_j);
    std::printf("  min@%.0fK\n", best->lmm_bytes / 1024);
  }
  return hits;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fit the shipped machine profiles"};
  std::string models = "data/models";
  std::string out = "data/machines";
  app.add_option("--models", models, "model profile directory");
  app.add_option("--out", out, "output directory");
  CLI11_PARSE(app, argc, argv);

  try {
    const Targets tg;
    MachineConfig fpga = seed_profile();
    const WorkloadTrace ref = build_trace(load_model_config(models + "/qwen3-0.6b-q3ks.json"), 32, 16);
    const OffloadPlan cap = plan_offload(ref, fpga, Policy::Capacity);
    fit_breakdown(fpga, ref, cap, tg);
    print_bd("fpga fit:", simulate_trace(ref, cap, fpga));
    const TransferMix mix = reference_transfer_mix(fpga);
    std::printf("coalescing LOAD x%.4f DRAIN x%.4f setup %.4e gather %.4e\n",
                coalescing_speedup(mix.load, fpga), coalescing_speedup(mix.drain, fpga), fpga.dma.setup_s,
                fpga.dma.gather_Bps);

    MachineConfig asic = fpga;
    asic.name = "imax3-28nm";
    asic.clock_hz = 840e6;

    // Host per-op costs, power slope and restage rate are searched jointly:
    // the offload selection must match the table at 64 KiB; among those
    // points, maximize sweep minima at 64 KiB, then the smallest margin.
    Search best;
    best.ev.hits = -1;
    bool best_declines = false;
    double best_restage = 0;
    for (double restage : {4e9, 2e9, 1e9, 5e8, 2.5e8, 1.25e8}) {
      MachineConfig c = asic;
      c.dma.restage_Bps = restage;
      const Search s = search(c, models);
      for (std::size_t b = 0; b < 4; ++b) c.host.op_s[kWeightFormats[b]] = s.op[b];
      c.power.lmm_watts_per_byte = s.slope;
      const bool declines = keeps_q8_0_on_host(c, models, 32, 16);
      std::printf("restage %.2e: %d/6 sweep minima at 64K, margin %.4f, 8B Q8_0 kept on host: %s\n", restage,
                  s.ev.hits, s.ev.margin, declines ? "yes" : "no");
      const bool better = s.ev.hits > best.ev.hits ||
                          (s.ev.hits == best.ev.hits && declines && !best_declines) ||
                          (s.ev.hits == best.ev.hits && declines == best_declines && s.ev.margin > best.ev.margin);
      if (better) {
        best = s;
        best_declines = declines;
        best_restage = restage;
      }
    }
    const Eval best_ev = best.ev;
    const auto best_op = best.op;
    const double best_slope = best.slope;
    asic.dma.restage_Bps = best_restage;
    fpga.dma.restage_Bps = best_restage;
    if (best_ev.hits < 0) throw ConfigError("host.op_s: no point reproduces the offload selection");
    for (std::size_t b = 0; b < 4; ++b) {
      asic.host.op_s[kWeightFormats[b]] = best_op[b];
      fpga.host.op_s[kWeightFormats[b]] = best_op[b];
      std::printf("  op_s %-5s %.4e\n", std::string(format_name(kWeightFormats[b])).c_str(), best_op[b]);
    }
    asic.power.lmm_watts_per_byte = best_slope;
    fpga.power.lmm_watts_per_byte = best_slope;
    std::printf("slope %.4e W/B, restage %.2e B/s, %d/6 sweep minima at 64K, margin %.4f\n", best_slope,
                best_restage, best_ev.hits, best_ev.margin);
    count_sweep_minima(asic, models, 32, 16);

    save_machine_config(fpga, out + "/imax3-fpga.json");
    save_machine_config(asic, out + "/imax3-28nm.json");
  } catch (const Error& e) {
    std::fprintf(stderr, "calibration failed: %s\n", e.what());
    return 1;
  }
  return 0;
}
