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

// Analytical machine model: lanes, local memories, DMA, PIO and power.

#ifndef CGLASIM_MACHINE_HPP_
#define CGLASIM_MACHINE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cglasim/error.hpp"
#include "cglasim/kernels.hpp"
#include "cglasim/quant.hpp"
#include "cglasim/workload.hpp"

namespace cglasim {

inline constexpr double kKiB = 1024.0;
inline constexpr double kLmmReference = 64.0 * kKiB;
inline constexpr double kLmmMax = 512.0 * kKiB;
inline constexpr double kLmmMin = 8.0 * kKiB;

using FormatMap = std::map<QuantFormat, double>;

struct DmaParams {
  double setup_s = 0.0;
  double bandwidth_Bps = 1.0;
  // Drain direction rate; 0 means "same as bandwidth_Bps".
  double drain_bandwidth_Bps = 0.0;
  // Host copy rate into the contiguous staging block; infinity disables it.
  double gather_Bps = std::numeric_limits<double>::infinity();
  bool coalesce = true;
  // Pinned DMA buffer shared by all resident offloaded weights.
  double buffer_bytes = 4.0 * 1024 * 1024 * 1024;
  // Host copy rate for weights that do not fit the DMA buffer.
  double restage_Bps = std::numeric_limits<double>::infinity();

  double rate(bool drain) const {
    return drain && drain_bandwidth_Bps > 0 ? drain_bandwidth_Bps : bandwidth_Bps;
  }
};

struct PioParams {
  double word_s = 0.0;
  FormatMap conf_words;
  FormatMap regv_words;
  FormatMap range_words;
};

struct PowerModel {
  FormatMap kernel_watts;
  double lmm_watts_per_byte = 0.0;
  double host_idle_watts = 0.0;
  double host_active_watts = 0.0;
};

struct HostParams {
  double serial_s_per_offload = 0.0;
  double contention_penalty = 0.0;
  // Global multiplier on task_s.
  double task_scale = 1.0;
  std::map<HostKind, double> task_s;
  // Host seconds per operation for calls kept on the host.
  FormatMap op_s;
};

struct MachineConfig {
  std::string name;
  int lanes_total = 8;
  int lanes_used = 1;
  int pes_per_lane = 64;
  double lmm_bytes = kLmmReference;
  double clock_hz = 145e6;
  CycleParams cycle;
  DmaParams dma;
  PioParams pio;
  PowerModel power;
  HostParams host;
};

inline double lookup(const FormatMap& m, QuantFormat f) {
  auto it = m.find(f);
  return it == m.end() ? 0.0 : it->second;
}

inline bool is_power_of_two(double v) {
  if (v <= 0 || v != std::floor(v)) return false;
  const auto u = static_cast<uint64_t>(v);
  return (u & (u - 1)) == 0;
}

inline void validate(const MachineConfig& c) {
  if (c.lanes_total < 1 || c.lanes_total > 8) throw ConfigError("lanes_total");
  if (c.lanes_used < 1 || c.lanes_used > c.lanes_total) throw ConfigError("lanes_used");
  if (c.pes_per_lane < 1) throw ConfigError("pes_per_lane");
  if (!is_power_of_two(c.lmm_bytes) || c.lmm_bytes < kLmmMin || c.lmm_bytes > kLmmMax) {
    throw ConfigError("lmm_bytes");
  }
  if (!(c.clock_hz > 0)) throw ConfigError("clock_hz");
  if (!(c.cycle.issue_interval > 0)) throw ConfigError("cycle.issue_interval");
  if (c.cycle.replication_effective < 0) throw ConfigError("cycle.replication_effective");
  if (!(c.dma.bandwidth_Bps > 0)) throw ConfigError("dma.bandwidth_Bps");
  if (c.dma.drain_bandwidth_Bps < 0) throw ConfigError("dma.drain_bandwidth_Bps");
  if (!(c.dma.gather_Bps > 0)) throw ConfigError("dma.gather_Bps");
  if (!(c.dma.restage_Bps > 0)) throw ConfigError("dma.restage_Bps");
  if (c.dma.setup_s < 0) throw ConfigError("dma.setup_s");
  if (!(c.dma.buffer_bytes > 0)) throw ConfigError("dma.buffer_bytes");
  if (c.pio.word_s < 0) throw ConfigError("pio.word_s");
  if (c.power.lmm_watts_per_byte < 0) throw ConfigError("power.lmm_watts_per_byte");
  if (c.power.host_idle_watts < 0) throw ConfigError("power.host_idle_watts");
  if (c.power.host_active_watts < 0) throw ConfigError("power.host_active_watts");
  for (const auto& [f, w] : c.power.kernel_watts) {
    if (w < 0) throw ConfigError("power.kernel_watts." + std::string(format_name(f)));
  }
  if (c.host.serial_s_per_offload < 0) throw ConfigError("host.serial_s_per_offload");
  if (c.host.contention_penalty < 0) throw ConfigError("host.contention_penalty");
  if (c.host.task_scale < 0) throw ConfigError("host.task_scale");
}

// ---- JSON ----

namespace detail {

inline nlohmann::ordered_json rate_json(double v) {
  return std::isinf(v) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(v);
}

inline nlohmann::ordered_json format_map_json(const FormatMap& m) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [f, v] : m) j[std::string(format_name(f))] = v;
  return j;
}

inline double num(const nlohmann::json& j, const char* key, const std::string& path, bool nullable = false) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(path);
  const auto& v = j.at(key);
  if (nullable && v.is_null()) return std::numeric_limits<double>::infinity();
  if (!v.is_number()) throw ConfigError(path);
  return v.get<double>();
}

inline const nlohmann::json& obj(const nlohmann::json& j, const char* key, const std::string& path) {
  if (!j.is_object() || !j.contains(key) || !j.at(key).is_object()) throw ConfigError(path);
  return j.at(key);
}

inline FormatMap format_map(const nlohmann::json& j, const std::string& path) {
  FormatMap m;
  for (const auto& [k, v] : j.items()) {
    const std::string p = path + "." + k;
    QuantFormat f;
    try {
      f = parse_format(k);
    } catch (const UnsupportedFormat&) {
      throw ConfigError(p);
    }
    if (!v.is_number()) throw ConfigError(p);
    m[f] = v.get<double>();
  }
  return m;
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const MachineConfig& c) {
  using detail::format_map_json;
  nlohmann::ordered_json j;
  j["schema"] = "cglasim.machine/v1";
  j["name"] = c.name;
  j["lanes_total"] = c.lanes_total;
  j["lanes_used"] = c.lanes_used;
  j["pes_per_lane"] = c.pes_per_lane;
  j["lmm_bytes"] = c.lmm_bytes;
  j["clock_hz"] = c.clock_hz;
  j["cycle"] = {{"issue_interval", c.cycle.issue_interval},
                {"replication_effective", c.cycle.replication_effective}};
  j["dma"] = {{"setup_s", c.dma.setup_s},
              {"bandwidth_Bps", c.dma.bandwidth_Bps},
              {"drain_bandwidth_Bps", c.dma.drain_bandwidth_Bps},
              {"gather_Bps", detail::rate_json(c.dma.gather_Bps)},
              {"coalesce", c.dma.coalesce},
              {"buffer_bytes", c.dma.buffer_bytes},
              {"restage_Bps", detail::rate_json(c.dma.restage_Bps)}};
  j["pio"] = {{"word_s", c.pio.word_s},
              {"conf_words", format_map_json(c.pio.conf_words)},
              {"regv_words", format_map_json(c.pio.regv_words)},
              {"range_words", format_map_json(c.pio.range_words)}};
  j["power"] = {{"kernel_watts", format_map_json(c.power.kernel_watts)},
                {"lmm_watts_per_byte", c.power.lmm_watts_per_byte},
                {"host_idle_watts", c.power.host_idle_watts},
                {"host_active_watts", c.power.host_active_watts}};
  nlohmann::ordered_json tasks = nlohmann::ordered_json::object();
  for (auto k : kHostKinds) {
    auto it = c.host.task_s.find(k);
    tasks[std::string(host_kind_name(k))] = it == c.host.task_s.end() ? 0.0 : it->second;
  }
  j["host"] = {{"serial_s_per_offload", c.host.serial_s_per_offload},
               {"contention_penalty", c.host.contention_penalty},
               {"task_scale", c.host.task_scale},
               {"task_s", tasks},
               {"op_s", format_map_json(c.host.op_s)}};
  return j;
}

inline MachineConfig machine_from_json(const nlohmann::json& j) {
  using detail::num;
  using detail::obj;
  MachineConfig c;
  if (!j.contains("name") || !j["name"].is_string()) throw ConfigError("name");
  c.name = j["name"].get<std::string>();
  c.lanes_total = static_cast<int>(num(j, "lanes_total", "lanes_total"));
  c.lanes_used = static_cast<int>(num(j, "lanes_used", "lanes_used"));
  c.pes_per_lane = static_cast<int>(num(j, "pes_per_lane", "pes_per_lane"));
  c.lmm_bytes = num(j, "lmm_bytes", "lmm_bytes");
  c.clock_hz = num(j, "clock_hz", "clock_hz");
  const auto& cy = obj(j, "cycle", "cycle");
  c.cycle.issue_interval = num(cy, "issue_interval", "cycle.issue_interval");
  c.cycle.replication_effective = num(cy, "replication_effective", "cycle.replication_effective");
  const auto& d = obj(j, "dma", "dma");
  c.dma.setup_s = num(d, "setup_s", "dma.setup_s");
  c.dma.bandwidth_Bps = num(d, "bandwidth_Bps", "dma.bandwidth_Bps");
  c.dma.drain_bandwidth_Bps = num(d, "drain_bandwidth_Bps", "dma.drain_bandwidth_Bps");
  c.dma.gather_Bps = num(d, "gather_Bps", "dma.gather_Bps", true);
  if (!d.contains("coalesce") || !d["coalesce"].is_boolean()) throw ConfigError("dma.coalesce");
  c.dma.coalesce = d["coalesce"].get<bool>();
  c.dma.buffer_bytes = num(d, "buffer_bytes", "dma.buffer_bytes");
  c.dma.restage_Bps = num(d, "restage_Bps", "dma.restage_Bps", true);
  const auto& p = obj(j, "pio", "pio");
  c.pio.word_s = num(p, "word_s", "pio.word_s");
  c.pio.conf_words = detail::format_map(obj(p, "conf_words", "pio.conf_words"), "pio.conf_words");
  c.pio.regv_words = detail::format_map(obj(p, "regv_words", "pio.regv_words"), "pio.regv_words");
  c.pio.range_words = detail::format_map(obj(p, "range_words", "pio.range_words"), "pio.range_words");
  const auto& w = obj(j, "power", "power");
  c.power.kernel_watts = detail::format_map(obj(w, "kernel_watts", "power.kernel_watts"), "power.kernel_watts");
  c.power.lmm_watts_per_byte = num(w, "lmm_watts_per_byte", "power.lmm_watts_per_byte");
  c.power.host_idle_watts = num(w, "host_idle_watts", "power.host_idle_watts");
  c.power.host_active_watts = num(w, "host_active_watts", "power.host_active_watts");
  const auto& h = obj(j, "host", "host");
  c.host.serial_s_per_offload = num(h, "serial_s_per_offload", "host.serial_s_per_offload");
  c.host.contention_penalty = num(h, "contention_penalty", "host.contention_penalty");
  c.host.task_scale = num(h, "task_scale", "host.task_scale");
  const auto& tasks = obj(h, "task_s", "host.task_s");
  for (auto k : kHostKinds) {
    const std::string key(host_kind_name(k));
    c.host.task_s[k] = num(tasks, key.c_str(), "host.task_s." + key);
  }
  c.host.op_s = detail::format_map(obj(h, "op_s", "host.op_s"), "host.op_s");
  validate(c);
  return c;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(path);
  }
}

inline MachineConfig load_machine_config(const std::string& path) {
  return machine_from_json(read_json_file(path));
}

inline void save_machine_config(const MachineConfig& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError(path);
  out << to_json(c).dump(2) << "\n";
}

// Applies "a.b.c=value" to a config document. The value is parsed as JSON
// when possible and kept as a string otherwise.
inline void apply_override(nlohmann::json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) throw ConfigError(std::string(assignment));
  std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  std::string ptr;
  for (std::size_t i = 0, j; i <= key.size(); i = j + 1) {
    j = key.find('.', i);
    if (j == std::string::npos) j = key.size();
    ptr += "/" + key.substr(i, j - i);
  }
  const nlohmann::json::json_pointer jp(ptr);
  if (!doc.contains(jp)) throw ConfigError(key);
  nlohmann::json v;
  try {
    v = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    v = raw;
  }
  doc[jp] = v;
}

// ---- DMA ----

enum class Direction : uint8_t { Load, Drain };

struct Region {
  double offset = 0;
  double length = 0;
};

struct TransferPlan {
  std::vector<Region> buffers;
  bool coalesced = false;
  Direction direction = Direction::Load;
};

inline double dma_time(const TransferPlan& plan, const MachineConfig& cfg) {
  const double bw = cfg.dma.rate(plan.direction == Direction::Drain);
  if (!(bw > 0)) throw ConfigError("dma.bandwidth_Bps");
  if (!(cfg.dma.gather_Bps > 0)) throw ConfigError("dma.gather_Bps");
  if (plan.buffers.empty()) return 0.0;
  double total = 0;
  for (const auto& b : plan.buffers) {
    if (!(b.length > 0)) throw ShapeError("transfer length must be positive");
    total += b.length;
  }
  double t = 0;
  for (const auto& b : plan.buffers) t += cfg.dma.setup_s + b.length / bw;
  // Staging is skipped when the gather copy costs more than the setups saved.
  if (plan.coalesced) t = std::min(t, cfg.dma.setup_s + total / bw + total / cfg.dma.gather_Bps);
  return t;
}

// Closed form of dma_time for `count` equal buffers of `bytes_each`.
inline double dma_time_uniform(double bytes_total, int count, bool coalesced, Direction dir,
                               const MachineConfig& cfg) {
  const double bw = cfg.dma.rate(dir == Direction::Drain);
  if (!(bw > 0)) throw ConfigError("dma.bandwidth_Bps");
  if (bytes_total <= 0 || count < 1) return 0.0;
  const double naive = count * cfg.dma.setup_s + bytes_total / bw;
  if (coalesced) return std::min(naive, cfg.dma.setup_s + bytes_total / bw + bytes_total / cfg.dma.gather_Bps);
  return naive;
}

// ---- PIO ----

enum class PioKind : uint8_t { Conf, Regv, Range };

inline double pio_words(PioKind kind, const KernelDescriptor& k, const MachineConfig& cfg) {
  switch (kind) {
    case PioKind::Conf: return lookup(cfg.pio.conf_words, k.format);
    case PioKind::Regv: return lookup(cfg.pio.regv_words, k.format);
    case PioKind::Range: return lookup(cfg.pio.range_words, k.format);
  }
  return 0.0;
}

inline double pio_time(PioKind kind, const KernelDescriptor& k, const MachineConfig& cfg) {
  return pio_words(kind, k, cfg) * cfg.pio.word_s;
}

// ---- Double-buffered overlap ----

struct Step {
  double load_s = 0;
  double exec_s = 0;
  double drain_s = 0;
};

struct OverlapResult {
  double total_s = 0;
  double load_s = 0;
  double exec_s = 0;
  double drain_s = 0;
};

// Streams steps in O(1) per run of identical steps. While a step executes,
// the next one loads; all drains but the last hide under later work.
class OverlapChain {
 public:
  void add(const Step& s, double count = 1) {
    if (count <= 0) return;
    if (!open_) {
      load_ += s.load_s;
      open_ = true;
    } else {
      advance(s.load_s);
    }
    last_ = s;
    const double rest = count - 1;
    if (rest > 0) {
      exec_ += rest * s.exec_s;
      load_ += rest * std::max(0.0, s.load_s - s.exec_s);
    }
  }

  OverlapResult finish() {
    OverlapResult r;
    if (open_) {
      exec_ += last_.exec_s;
      drain_ += last_.drain_s;
    }
    r.load_s = load_;
    r.exec_s = exec_;
    r.drain_s = drain_;
    r.total_s = load_ + exec_ + drain_;
    *this = OverlapChain{};
    return r;
  }

  bool empty() const { return !open_; }

 private:
  void advance(double next_load) {
    exec_ += last_.exec_s;
    load_ += std::max(0.0, next_load - last_.exec_s);
  }
  bool open_ = false;
  Step last_;
  double load_ = 0, exec_ = 0, drain_ = 0;
};

inline OverlapResult overlap_schedule(const std::vector<Step>& steps) {
  OverlapChain c;
  for (const auto& s : steps) {
    if (s.load_s < 0 || s.exec_s < 0 || s.drain_s < 0) throw RangeError("negative duration");
    c.add(s);
  }
  return c.finish();
}

// ---- Power ----

inline double accel_watts(QuantFormat f, const MachineConfig& cfg) {
  return cfg.lanes_used * (lookup(cfg.power.kernel_watts, f) +
                           (cfg.lmm_bytes - kLmmReference) * cfg.pes_per_lane * cfg.power.lmm_watts_per_byte);
}

inline double power_of(QuantFormat f, const MachineConfig& cfg) {
  return accel_watts(f, cfg) + cfg.power.host_idle_watts;
}

}  // namespace cglasim

#endif  // CGLASIM_MACHINE_HPP_
