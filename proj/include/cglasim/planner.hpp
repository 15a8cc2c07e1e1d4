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

// Offload decisions and offload ratios.

#ifndef CGLASIM_PLANNER_HPP_
#define CGLASIM_PLANNER_HPP_

#include <bit>
#include <cstddef>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cglasim/error.hpp"
#include "cglasim/kernels.hpp"
#include "cglasim/machine.hpp"
#include "cglasim/perf.hpp"
#include "cglasim/plan.hpp"
#include "cglasim/workload.hpp"

namespace cglasim {

// Formats whose every call in the trace fits the local memory.
inline std::map<QuantFormat, bool> capacity_feasible(const WorkloadTrace& t, const MachineConfig& cfg) {
  std::map<QuantFormat, bool> ok;
  for (const auto& c : t.calls) {
    auto [it, inserted] = ok.emplace(c.format, true);
    if (it->second && !fits(c, describe_kernel(c.format), cfg)) it->second = false;
  }
  return ok;
}

inline OffloadPlan plan_offload(const WorkloadTrace& t, const MachineConfig& cfg, Policy policy) {
  if (t.calls.empty()) throw EmptyTrace("trace has no kernel calls");
  const auto feasible = capacity_feasible(t, cfg);
  OffloadPlan plan;
  plan.policy = policy;
  for (auto f : kWeightFormats) plan.per_type[f] = false;
  std::vector<QuantFormat> cand;
  for (auto f : kWeightFormats) {
    auto it = feasible.find(f);
    if (it != feasible.end() && it->second) cand.push_back(f);
  }
  if (policy == Policy::Capacity) {
    for (auto f : cand) plan.per_type[f] = true;
    return plan;
  }
  double best = std::numeric_limits<double>::infinity();
  unsigned best_mask = 0;
  const unsigned n = static_cast<unsigned>(cand.size());
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    OffloadPlan p = plan;
    for (unsigned b = 0; b < n; ++b) p.per_type[cand[b]] = (mask >> b) & 1u;
    const double pdp = energy_metrics(simulate_trace(t, p, cfg), cfg).pdp_j;
    const int pc = std::popcount(mask), bc = std::popcount(best_mask);
    if (pdp < best || (pdp == best && (pc < bc || (pc == bc && mask < best_mask)))) {
      best = pdp;
      best_mask = mask;
    }
  }
  for (unsigned b = 0; b < n; ++b) plan.per_type[cand[b]] = (best_mask >> b) & 1u;
  return plan;
}

struct OffloadRatioReport {
  FormatMap per_type;
  FormatMap total_macs;
  double total = 0;
};

inline OffloadRatioReport offload_ratio(const OffloadPlan& plan, const WorkloadTrace& t) {
  OffloadRatioReport r;
  FormatMap done;
  double all = 0, off = 0;
  for (std::size_t i = 0; i < t.calls.size(); ++i) {
    const auto& c = t.calls[i];
    const double m = c.macs();
    r.total_macs[c.format] += m;
    all += m;
    if (plan.offloaded(i, c)) {
      done[c.format] += m;
      off += m;
    }
  }
  for (const auto& [f, m] : r.total_macs) r.per_type[f] = m > 0 ? lookup(done, f) / m : 0.0;
  r.total = all > 0 ? off / all : 0.0;
  return r;
}

inline nlohmann::ordered_json to_json(const OffloadRatioReport& r) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json pt = nlohmann::ordered_json::object();
  for (auto f : kWeightFormats) {
    auto it = r.per_type.find(f);
    if (it != r.per_type.end()) pt[std::string(format_name(f))] = it->second;
  }
  j["per_type"] = pt;
  j["total"] = r.total;
  return j;
}

}  // namespace cglasim

#endif  // CGLASIM_PLANNER_HPP_
