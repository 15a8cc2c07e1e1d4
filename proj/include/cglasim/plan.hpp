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

// Offload plans, per-PE footprints and tile decomposition of kernel calls.

#ifndef CGLASIM_PLAN_HPP_
#define CGLASIM_PLAN_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>

#include <json.hpp>

#include "cglasim/error.hpp"
#include "cglasim/kernels.hpp"
#include "cglasim/machine.hpp"
#include "cglasim/quant.hpp"
#include "cglasim/workload.hpp"

namespace cglasim {

enum class Policy : uint8_t { Capacity, Pdp };

constexpr std::string_view policy_name(Policy p) { return p == Policy::Capacity ? "capacity" : "pdp"; }

inline Policy parse_policy(std::string_view s) {
  if (s == "capacity") return Policy::Capacity;
  if (s == "pdp") return Policy::Pdp;
  throw ConfigError("policy");
}

struct OffloadPlan {
  std::map<QuantFormat, bool> per_type;
  // Trace call index -> forced decision.
  std::map<std::size_t, bool> per_call;
  Policy policy = Policy::Capacity;

  bool type_offloaded(QuantFormat f) const {
    auto it = per_type.find(f);
    return it != per_type.end() && it->second;
  }
  bool offloaded(std::size_t index, const KernelCall& c) const {
    auto it = per_call.find(index);
    return it != per_call.end() ? it->second : type_offloaded(c.format);
  }
  bool operator==(const OffloadPlan&) const = default;
};

inline OffloadPlan plan_with(std::initializer_list<QuantFormat> on, Policy p = Policy::Capacity) {
  OffloadPlan plan;
  plan.policy = p;
  for (auto f : kWeightFormats) plan.per_type[f] = false;
  for (auto f : on) plan.per_type[f] = true;
  return plan;
}

inline nlohmann::ordered_json to_json(const OffloadPlan& p) {
  nlohmann::ordered_json j;
  j["schema"] = "cglasim.plan/v1";
  j["policy"] = policy_name(p.policy);
  nlohmann::ordered_json t = nlohmann::ordered_json::object();
  for (auto f : kWeightFormats) t[std::string(format_name(f))] = p.type_offloaded(f);
  j["per_type"] = t;
  nlohmann::ordered_json c = nlohmann::ordered_json::array();
  for (const auto& [i, on] : p.per_call) c.push_back({{"index", i}, {"offload", on}});
  j["per_call"] = c;
  return j;
}

inline OffloadPlan plan_from_json(const nlohmann::json& j) {
  OffloadPlan p;
  if (!j.contains("policy") || !j["policy"].is_string()) throw ConfigError("policy");
  p.policy = parse_policy(j["policy"].get<std::string>());
  if (!j.contains("per_type") || !j["per_type"].is_object()) throw ConfigError("per_type");
  for (const auto& [k, v] : j["per_type"].items()) {
    if (!v.is_boolean()) throw ConfigError("per_type." + k);
    try {
      p.per_type[parse_format(k)] = v.get<bool>();
    } catch (const UnsupportedFormat&) {
      throw ConfigError("per_type." + k);
    }
  }
  if (j.contains("per_call")) {
    for (const auto& e : j["per_call"]) {
      if (!e.contains("index") || !e.contains("offload")) throw ConfigError("per_call");
      p.per_call[e["index"].get<std::size_t>()] = e["offload"].get<bool>();
    }
  }
  return p;
}

// Smallest tile: this many output rows for one token.
inline constexpr double kMinTileRows = 128.0;

inline double footprint(const KernelCall& c, const KernelDescriptor& k, const MachineConfig& cfg) {
  (void)cfg;
  if (c.rows <= 0 || c.cols <= 0 || c.batch <= 0 || c.groups <= 0) return 0.0;
  const double rows = std::min<double>(static_cast<double>(c.rows), kMinTileRows);
  return k.lmm_footprint(static_cast<double>(c.cols), rows, 1.0);
}

inline bool fits(const KernelCall& c, const KernelDescriptor& k, const MachineConfig& cfg) {
  return footprint(c, k, cfg) <= cfg.lmm_bytes;
}

// Tiles of equal average size covering one call.
struct Tiling {
  double tiles = 0;
  double rows = 0;    // per group
  double tokens = 0;  // per group
  double load_bytes = 0;    // per tile
  double weight_bytes = 0;  // per tile, part of load_bytes
  double drain_bytes = 0;   // per tile
  double cycles = 0;        // per tile
};

inline Tiling tile_call(const KernelCall& c, const KernelDescriptor& k, const MachineConfig& cfg) {
  Tiling t;
  if (c.rows <= 0 || c.cols <= 0 || c.batch <= 0 || c.groups <= 0) return t;
  if (!fits(c, k, cfg)) throw ShapeError("call does not fit the local memory: " + c.role);
  const double cols = static_cast<double>(c.cols);
  const double rows = static_cast<double>(c.rows), batch = static_cast<double>(c.batch);
  const double W = k.weight_bytes(cols), A = k.act_bytes(cols), O = KernelDescriptor::kOutBytes;
  const double budget = cfg.lmm_bytes * k.lmm_stripes / 2.0;
  const double r0 = std::min(rows, kMinTileRows);
  const double bt = std::clamp(std::floor((budget - r0 * W) / (A + r0 * O)), 1.0, batch);
  const double r = std::clamp(std::floor((budget - bt * A) / (W + bt * O)), r0, rows);
  const double row_tiles = std::ceil(rows / r);
  const double tok_tiles = std::ceil(batch / bt);
  // Whole groups that fit side by side share one tile.
  const double groups = static_cast<double>(c.groups);
  double per_tile_groups = 1;
  if (row_tiles == 1 && tok_tiles == 1) {
    per_tile_groups = std::clamp(std::floor(budget / (rows * W + batch * A + rows * batch * O)), 1.0, groups);
  }
  const double group_tiles = std::ceil(groups / per_tile_groups);
  const double g = groups / group_tiles;
  t.tiles = group_tiles * row_tiles * tok_tiles;
  t.rows = rows / row_tiles;
  t.tokens = batch / tok_tiles;
  t.weight_bytes = g * t.rows * W;
  t.load_bytes = t.weight_bytes + g * t.tokens * A;
  t.drain_bytes = g * t.rows * t.tokens * O;
  const double per_dot = cycles_for(k, cols, cfg.cycle) - k.pe_stages;
  t.cycles = k.pe_stages + g * t.rows * t.tokens * per_dot;
  return t;
}

}  // namespace cglasim

#endif  // CGLASIM_PLAN_HPP_
