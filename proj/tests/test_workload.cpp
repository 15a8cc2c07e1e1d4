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

#include <filesystem>
#include <set>
#include <sstream>
#include <string>

#include "cglasim/workload.hpp"
#include "test_util.hpp"

using namespace cglasim;

namespace {

ModelConfig shipped(const std::string& file) {
  return load_model_config(testutil::source_path("data/models/" + file));
}

ModelConfig toy() {
  ModelConfig m;
  m.name = "toy";
  m.layers = 1;
  m.hidden = 64;
  m.heads = 4;
  m.kv_heads = 2;
  m.head_dim = 16;
  m.ffn_dim = 128;
  m.vocab = 500;
  for (auto r : kTensorRoles) m.quant_map[std::string(r)] = QuantFormat::Q8_0;
  for (auto r : {"attn_score", "attn_value", "norm"}) m.quant_map[r] = QuantFormat::FP16;
  return m;
}

// Closed form, written independently of the trace builder.
double closed_form_macs(const ModelConfig& m, int64_t n_in, int64_t n_out) {
  const double h = m.hidden, q = m.heads * m.head_dim, kv = m.kv_heads * m.head_dim, f = m.ffn_dim;
  const double proj = h * q + 2 * h * kv + q * h + 3 * h * f;
  auto pass = [&](double tokens, double ctx) {
    const double attn = 2 * m.heads * ctx * m.head_dim;
    return m.layers * 2 * tokens * (proj + attn) + 2.0 * m.vocab * h;
  };
  double total = pass(n_in, n_in);
  for (int64_t t = 1; t <= n_out; ++t) total += pass(1, n_in + t);
  return total;
}

double stage_macs(const WorkloadTrace& t, Stage s, const std::string& role) {
  double m = 0;
  for (const auto& c : t.calls) {
    if (c.stage == s && c.role == role) m += c.macs();
  }
  return m;
}

}  // namespace

TEST(ModelConfig, ShippedQ8_0Profile) {
  const ModelConfig m = shipped("qwen3-0.6b-q8_0.json");
  for (auto r : {"attn_q", "attn_k", "attn_v", "attn_o", "ffn_gate", "ffn_up", "ffn_down"}) {
    EXPECT_EQ(m.format_for(r), QuantFormat::Q8_0) << r;
  }
  for (auto r : {"attn_score", "attn_value", "norm"}) EXPECT_EQ(m.format_for(r), QuantFormat::FP16) << r;
}

TEST(ModelConfig, AllShippedProfilesValidate) {
  int n = 0;
  for (const auto& e : std::filesystem::directory_iterator(testutil::source_path("data/models"))) {
    EXPECT_NO_THROW(load_model_config(e.path().string())) << e.path();
    ++n;
  }
  EXPECT_EQ(n, 6);
}

TEST(ModelConfig, MissingFieldNamed) {
  nlohmann::json j = nlohmann::json::parse(to_json(toy()).dump());
  j.erase("layers");
  try {
    model_from_json(j);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_STREQ(e.what(), "layers");
  }
  nlohmann::json k = nlohmann::json::parse(to_json(toy()).dump());
  k["quant_map"]["attn_q"] = "Q4_K";
  EXPECT_THROW(model_from_json(k), ConfigError);
}

TEST(ModelConfig, SaveLoadIdentity) {
  const ModelConfig m = shipped("qwen3-8b-q3ks.json");
  const auto path = std::filesystem::temp_directory_path() / "cglasim_model_roundtrip.json";
  save_model_config(m, path.string());
  EXPECT_EQ(load_model_config(path.string()), m);
  std::filesystem::remove(path);
}

TEST(Trace, OneLayerPrefillOnly) {
  const WorkloadTrace t = build_trace(toy(), 1, 0);
  std::multiset<std::string> roles;
  for (const auto& c : t.calls) {
    EXPECT_EQ(c.stage, Stage::Prefill);
    roles.insert(c.role);
  }
  const std::multiset<std::string> want = {"attn_q", "attn_k", "attn_v", "attn_score", "attn_value",
                                           "attn_o", "ffn_gate", "ffn_up", "ffn_down", "lm_head"};
  EXPECT_EQ(roles, want);
}

TEST(Trace, DecodeStepsExtendThePrefix) {
  const WorkloadTrace a = build_trace(toy(), 8, 1), b = build_trace(toy(), 8, 2);
  ASSERT_GT(b.calls.size(), a.calls.size());
  for (std::size_t i = 0; i < a.calls.size(); ++i) ASSERT_EQ(a.calls[i], b.calls[i]);
  for (std::size_t i = a.calls.size(); i < b.calls.size(); ++i) {
    EXPECT_EQ(b.calls[i].stage, Stage::Decode);
    EXPECT_EQ(b.calls[i].step, 2);
  }
}

TEST(Trace, KvGrowth) {
  const WorkloadTrace t = build_trace(toy(), 5, 3);
  for (const auto& c : t.calls) {
    if (c.stage != Stage::Decode) continue;
    if (c.role == "attn_score") {
      EXPECT_EQ(c.rows, 5 + c.step);
    }
    if (c.role == "attn_value") {
      EXPECT_EQ(c.cols, 5 + c.step);
    }
  }
}

TEST(Trace, MacCountMatchesClosedForm) {
  for (auto file : {"qwen3-0.6b-q3ks.json", "qwen3-0.6b-q8_0.json", "qwen3-1.7b-q8_0.json", "qwen3-8b-q8_0.json"}) {
    const ModelConfig m = shipped(file);
    const WorkloadTrace t = build_trace(m, 32, 16);
    EXPECT_DOUBLE_EQ(t.total_macs(), closed_form_macs(m, 32, 16)) << file;
  }
}

TEST(Trace, PrefillScaling) {
  const ModelConfig m = shipped("qwen3-0.6b-q8_0.json");
  const WorkloadTrace a = build_trace(m, 16, 0), b = build_trace(m, 32, 0);
  EXPECT_DOUBLE_EQ(stage_macs(b, Stage::Prefill, "ffn_up"), 2 * stage_macs(a, Stage::Prefill, "ffn_up"));
  EXPECT_DOUBLE_EQ(stage_macs(b, Stage::Prefill, "attn_score"), 4 * stage_macs(a, Stage::Prefill, "attn_score"));
}

TEST(Trace, InvalidTokenCounts) {
  EXPECT_THROW(build_trace(toy(), 0, 4), RangeError);
  EXPECT_THROW(build_trace(toy(), 4, -1), RangeError);
}

TEST(Trace, FormatsComeFromQuantMap) {
  const ModelConfig m = shipped("qwen3-1.7b-q3ks.json");
  std::set<QuantFormat> range;
  for (const auto& [r, f] : m.quant_map) range.insert(f);
  for (const auto& c : build_trace(m, 8, 2).calls) {
    EXPECT_TRUE(range.count(c.format));
    EXPECT_EQ(c.format, m.format_for(c.role));
  }
}

TEST(Trace, DeterministicDump) {
  const ModelConfig m = toy();
  std::ostringstream a, b;
  dump_trace(build_trace(m, 4, 2), a);
  dump_trace(build_trace(m, 4, 2), b);
  EXPECT_EQ(a.str(), b.str());
  const WorkloadTrace t = build_trace(m, 4, 2);
  std::size_t lines = 0;
  for (char ch : a.str()) lines += ch == '\n';
  EXPECT_EQ(lines, t.calls.size() + t.host_tasks.size());
}

TEST(Trace, HostTasksCoverFixedWork) {
  const WorkloadTrace t = build_trace(toy(), 4, 2);
  std::set<HostKind> kinds;
  for (const auto& h : t.host_tasks) kinds.insert(h.kind);
  for (auto k : kHostKinds) EXPECT_TRUE(kinds.count(k)) << host_kind_name(k);
}
