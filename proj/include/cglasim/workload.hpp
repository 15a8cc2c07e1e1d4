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

// Model configurations and the kernel-call traces they induce.

#ifndef CGLASIM_WORKLOAD_HPP_
#define CGLASIM_WORKLOAD_HPP_

#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cglasim/error.hpp"
#include "cglasim/quant.hpp"

namespace cglasim {

inline constexpr std::array<std::string_view, 11> kTensorRoles = {
    "attn_q", "attn_k", "attn_v", "attn_o", "ffn_gate", "ffn_up",
    "ffn_down", "lm_head", "attn_score", "attn_value", "norm"};

struct ModelConfig {
  std::string name;
  std::string source;
  int64_t layers = 0;
  int64_t hidden = 0;
  int64_t heads = 0;
  int64_t kv_heads = 0;
  int64_t head_dim = 0;
  int64_t ffn_dim = 0;
  int64_t vocab = 0;
  bool tied_embeddings = false;
  std::map<std::string, QuantFormat> quant_map;

  QuantFormat format_for(std::string_view role) const {
    auto it = quant_map.find(std::string(role));
    if (it == quant_map.end()) throw ConfigError("quant_map." + std::string(role));
    return it->second;
  }
  bool operator==(const ModelConfig&) const = default;
};

inline void validate(const ModelConfig& m) {
  const std::pair<const char*, int64_t> dims[] = {
      {"layers", m.layers},     {"hidden", m.hidden},   {"heads", m.heads}, {"kv_heads", m.kv_heads},
      {"head_dim", m.head_dim}, {"ffn_dim", m.ffn_dim}, {"vocab", m.vocab}};
  for (const auto& [k, v] : dims) {
    if (v <= 0) throw ConfigError(k);
  }
  if (m.heads % m.kv_heads != 0) throw ConfigError("kv_heads");
  for (auto role : kTensorRoles) (void)m.format_for(role);
  for (const auto& [role, f] : m.quant_map) {
    if (f == QuantFormat::Q8_K) throw ConfigError("quant_map." + role);
  }
}

inline nlohmann::ordered_json to_json(const ModelConfig& m) {
  nlohmann::ordered_json j;
  j["schema"] = "cglasim.model/v1";
  j["name"] = m.name;
  j["source"] = m.source;
  j["layers"] = m.layers;
  j["hidden"] = m.hidden;
  j["heads"] = m.heads;
  j["kv_heads"] = m.kv_heads;
  j["head_dim"] = m.head_dim;
  j["ffn_dim"] = m.ffn_dim;
  j["vocab"] = m.vocab;
  j["tied_embeddings"] = m.tied_embeddings;
  nlohmann::ordered_json q = nlohmann::ordered_json::object();
  for (auto role : kTensorRoles) {
    auto it = m.quant_map.find(std::string(role));
    if (it != m.quant_map.end()) q[std::string(role)] = format_name(it->second);
  }
  j["quant_map"] = q;
  return j;
}

namespace detail {
template <class T>
T field(const nlohmann::json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(path);
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(path);
  }
}
}  // namespace detail

inline ModelConfig model_from_json(const nlohmann::json& j) {
  ModelConfig m;
  m.name = detail::field<std::string>(j, "name", "name");
  m.source = j.value("source", "");
  m.layers = detail::field<int64_t>(j, "layers", "layers");
  m.hidden = detail::field<int64_t>(j, "hidden", "hidden");
  m.heads = detail::field<int64_t>(j, "heads", "heads");
  m.kv_heads = detail::field<int64_t>(j, "kv_heads", "kv_heads");
  m.head_dim = detail::field<int64_t>(j, "head_dim", "head_dim");
  m.ffn_dim = detail::field<int64_t>(j, "ffn_dim", "ffn_dim");
  m.vocab = detail::field<int64_t>(j, "vocab", "vocab");
  m.tied_embeddings = j.value("tied_embeddings", false);
  if (!j.contains("quant_map") || !j["quant_map"].is_object()) throw ConfigError("quant_map");
  for (const auto& [role, v] : j["quant_map"].items()) {
    const std::string path = "quant_map." + role;
    if (!v.is_string()) throw ConfigError(path);
    try {
      m.quant_map[role] = parse_format(v.get<std::string>());
    } catch (const UnsupportedFormat&) {
      throw ConfigError(path);
    }
  }
  validate(m);
  return m;
}

inline ModelConfig load_model_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(path);
  }
  return model_from_json(j);
}

inline void save_model_config(const ModelConfig& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError(path);
  out << to_json(m).dump(2) << "\n";
}

enum class Stage : uint8_t { Prefill = 0, Decode = 1 };

constexpr std::string_view stage_name(Stage s) { return s == Stage::Prefill ? "prefill" : "decode"; }

// A batched mat-vec: `groups` independent matrices of rows x cols, each
// applied to `batch` vectors.
struct KernelCall {
  QuantFormat format = QuantFormat::FP16;
  std::string role;
  Stage stage = Stage::Prefill;
  int64_t step = 0;    // 0 for prefill, t for decode step t
  int64_t layer = -1;  // -1 for the LM head
  int64_t groups = 1;
  int64_t rows = 0;
  int64_t cols = 0;
  int64_t batch = 1;

  // Two operations per multiply-add.
  double macs() const {
    return 2.0 * static_cast<double>(groups) * static_cast<double>(rows) * static_cast<double>(cols) *
           static_cast<double>(batch);
  }
  bool operator==(const KernelCall&) const = default;
};

enum class HostKind : uint8_t { Tokenize, Embed, RmsNorm, Rope, Softmax, Swiglu, KvManage };
inline constexpr std::array<HostKind, 7> kHostKinds = {HostKind::Tokenize, HostKind::Embed,
                                                       HostKind::RmsNorm,  HostKind::Rope,
                                                       HostKind::Softmax,  HostKind::Swiglu,
                                                       HostKind::KvManage};

constexpr std::string_view host_kind_name(HostKind k) {
  switch (k) {
    case HostKind::Tokenize: return "tokenize";
    case HostKind::Embed: return "embed";
    case HostKind::RmsNorm: return "rmsnorm";
    case HostKind::Rope: return "rope";
    case HostKind::Softmax: return "softmax";
    case HostKind::Swiglu: return "swiglu";
    case HostKind::KvManage: return "kv_manage";
  }
  return "?";
}

// Host-side work in element units (tokens for tokenize).
struct HostTask {
  HostKind kind = HostKind::Tokenize;
  Stage stage = Stage::Prefill;
  int64_t step = 0;
  int64_t layer = -1;
  double units = 0.0;
  bool operator==(const HostTask&) const = default;
};

struct WorkloadTrace {
  std::string model;
  int64_t n_in = 0;
  int64_t n_out = 0;
  std::vector<KernelCall> calls;
  std::vector<HostTask> host_tasks;

  double total_macs() const {
    double s = 0;
    for (const auto& c : calls) s += c.macs();
    return s;
  }
  bool empty() const { return calls.empty() && host_tasks.empty(); }
};

namespace detail {

inline void emit_pass(const ModelConfig& m, WorkloadTrace& t, Stage st, int64_t step, int64_t tokens,
                      int64_t ctx) {
  const int64_t hd = m.head_dim, q_dim = m.heads * hd, kv_dim = m.kv_heads * hd;
  const int64_t group = m.heads / m.kv_heads;
  auto call = [&](std::string_view role, int64_t layer, int64_t groups, int64_t rows, int64_t cols,
                  int64_t batch) {
    t.calls.push_back(KernelCall{m.format_for(role), std::string(role), st, step, layer, groups, rows,
                                 cols, batch});
  };
  auto host = [&](HostKind k, int64_t layer, double units) {
    t.host_tasks.push_back(HostTask{k, st, step, layer, units});
  };
  const double T = static_cast<double>(tokens);
  if (st == Stage::Prefill) host(HostKind::Tokenize, -1, T);
  host(HostKind::Embed, -1, T * static_cast<double>(m.hidden));
  for (int64_t l = 0; l < m.layers; ++l) {
    host(HostKind::RmsNorm, l, T * static_cast<double>(m.hidden));
    call("attn_q", l, 1, q_dim, m.hidden, tokens);
    call("attn_k", l, 1, kv_dim, m.hidden, tokens);
    call("attn_v", l, 1, kv_dim, m.hidden, tokens);
    host(HostKind::RmsNorm, l, T * static_cast<double>(q_dim + kv_dim));
    host(HostKind::Rope, l, T * static_cast<double>(q_dim + kv_dim));
    host(HostKind::KvManage, l, T * static_cast<double>(2 * kv_dim));
    call("attn_score", l, m.kv_heads, ctx, hd, tokens * group);
    host(HostKind::Softmax, l, T * static_cast<double>(m.heads * ctx));
    call("attn_value", l, m.kv_heads, hd, ctx, tokens * group);
    call("attn_o", l, 1, m.hidden, q_dim, tokens);
    host(HostKind::RmsNorm, l, T * static_cast<double>(m.hidden));
    call("ffn_gate", l, 1, m.ffn_dim, m.hidden, tokens);
    call("ffn_up", l, 1, m.ffn_dim, m.hidden, tokens);
    host(HostKind::Swiglu, l, T * static_cast<double>(m.ffn_dim));
    call("ffn_down", l, 1, m.hidden, m.ffn_dim, tokens);
  }
  host(HostKind::RmsNorm, -1, static_cast<double>(m.hidden));
  call("lm_head", -1, 1, m.vocab, m.hidden, 1);
}

}  // namespace detail

// Prefill covers the n_in prompt tokens (logits for the last one only);
// decode step t = 1..n_out attends over n_in + t positions.
inline WorkloadTrace build_trace(const ModelConfig& m, int64_t n_in, int64_t n_out) {
  if (n_in < 1) throw RangeError("n_in must be at least 1");
  if (n_out < 0) throw RangeError("n_out must be nonnegative");
  validate(m);
  WorkloadTrace t;
  t.model = m.name;
  t.n_in = n_in;
  t.n_out = n_out;
  detail::emit_pass(m, t, Stage::Prefill, 0, n_in, n_in);
  for (int64_t s = 1; s <= n_out; ++s) detail::emit_pass(m, t, Stage::Decode, s, 1, n_in + s);
  return t;
}

inline nlohmann::ordered_json to_json(const KernelCall& c) {
  nlohmann::ordered_json j;
  j["kind"] = "call";
  j["format"] = format_name(c.format);
  j["role"] = c.role;
  j["stage"] = stage_name(c.stage);
  j["step"] = c.step;
  j["layer"] = c.layer;
  j["groups"] = c.groups;
  j["rows"] = c.rows;
  j["cols"] = c.cols;
  j["batch"] = c.batch;
  return j;
}

inline nlohmann::ordered_json to_json(const HostTask& h) {
  nlohmann::ordered_json j;
  j["kind"] = "host";
  j["task"] = host_kind_name(h.kind);
  j["stage"] = stage_name(h.stage);
  j["step"] = h.step;
  j["layer"] = h.layer;
  j["units"] = h.units;
  return j;
}

// One JSON object per line: calls first, then host tasks.
inline void dump_trace(const WorkloadTrace& t, std::ostream& os) {
  for (const auto& c : t.calls) os << to_json(c).dump() << "\n";
  for (const auto& h : t.host_tasks) os << to_json(h).dump() << "\n";
}

}  // namespace cglasim

#endif  // CGLASIM_WORKLOAD_HPP_
