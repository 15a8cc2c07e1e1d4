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

#include <random>
#include <string>

#include "cglasim/planner.hpp"
#include "test_util.hpp"

using namespace cglasim;

namespace {

MachineConfig machine(const std::string& file) {
  return load_machine_config(testutil::source_path("data/machines/" + file));
}

ModelConfig model(const std::string& file) {
  return load_model_config(testutil::source_path("data/models/" + file));
}

ModelConfig toy() {
  ModelConfig m;
  m.name = "toy";
  m.layers = 2;
  m.hidden = 256;
  m.heads = 4;
  m.kv_heads = 2;
  m.head_dim = 64;
  m.ffn_dim = 512;
  m.vocab = 1000;
  for (auto r : kTensorRoles) m.quant_map[std::string(r)] = QuantFormat::Q8_0;
  for (auto r : {"attn_score", "attn_value", "norm"}) m.quant_map[r] = QuantFormat::FP16;
  return m;
}

KernelCall call(QuantFormat f, int64_t rows, int64_t cols, int64_t batch = 1) {
  return KernelCall{f, "ffn_up", Stage::Prefill, 0, 0, 1, rows, cols, batch};
}

}  // namespace

TEST(Footprint, SmallQ8_0RowFits) {
  const MachineConfig cfg = machine("imax3-fpga.json");
  const KernelCall c = call(QuantFormat::Q8_0, 1, 4096);
  const KernelDescriptor k = describe_kernel(QuantFormat::Q8_0);
  EXPECT_LE(footprint(c, k, cfg), 64.0 * 1024);
  EXPECT_TRUE(fits(c, k, cfg));
}

TEST(Footprint, ZeroLengthCall) {
  const MachineConfig cfg = machine("imax3-fpga.json");
  for (auto f : kWeightFormats) {
    EXPECT_EQ(footprint(call(f, 0, 256), describe_kernel(f), cfg), 0.0);
    EXPECT_EQ(footprint(call(f, 16, 0), describe_kernel(f), cfg), 0.0);
    EXPECT_EQ(tile_call(call(f, 0, 256), describe_kernel(f), cfg).tiles, 0.0);
  }
}

TEST(Footprint, WeightTermLinearInColumns) {
  const MachineConfig cfg = machine("imax3-fpga.json");
  for (auto f : kWeightFormats) {
    const KernelDescriptor k = describe_kernel(f);
    const double be = block_elems(f);
    const double a = footprint(call(f, 256, 4 * be), k, cfg);
    const double b = footprint(call(f, 256, 8 * be), k, cfg);
    const double c = footprint(call(f, 256, 12 * be), k, cfg);
    EXPECT_NEAR(c - b, b - a, 1e-9 * c) << format_name(f);
    EXPECT_GT(b, a);
  }
}

TEST(Footprint, OversizedCallRejected) {
  MachineConfig cfg = machine("imax3-fpga.json");
  cfg.lmm_bytes = kLmmMin;
  const KernelCall c = call(QuantFormat::FP16, 4096, 1 << 20);
  EXPECT_FALSE(fits(c, describe_kernel(QuantFormat::FP16), cfg));
  EXPECT_THROW(tile_call(c, describe_kernel(QuantFormat::FP16), cfg), ShapeError);
}

TEST(Tiling, CoversEveryOutput) {
  const MachineConfig cfg = machine("imax3-fpga.json");
  std::mt19937_64 rng(7);
  for (int i = 0; i < 500; ++i) {
    const QuantFormat f = kWeightFormats[testutil::uniform_int(rng, 0, 3)];
    const int64_t cols = block_elems(f) * testutil::uniform_int(rng, 1, 16);
    KernelCall c = call(f, testutil::uniform_int(rng, 1, 5000), cols, testutil::uniform_int(rng, 1, 40));
    c.groups = testutil::uniform_int(rng, 1, 8);
    const KernelDescriptor k = describe_kernel(f);
    if (!fits(c, k, cfg)) continue;
    const Tiling t = tile_call(c, k, cfg);
    const double outputs = t.tiles * t.rows * t.tokens * (t.weight_bytes / (t.rows * k.weight_bytes(cols)));
    EXPECT_NEAR(outputs, static_cast<double>(c.groups * c.rows * c.batch), 1e-6 * outputs);
    EXPECT_LE(t.load_bytes + t.drain_bytes, cfg.lmm_bytes * k.lmm_stripes / 2.0 + 1e-9) << i;
  }
}

TEST(Planner, CapacityOnToyOffloadsEverything) {
  const MachineConfig cfg = machine("imax3-fpga.json");
  const WorkloadTrace t = build_trace(toy(), 8, 4);
  const OffloadPlan p = plan_offload(t, cfg, Policy::Capacity);
  const OffloadRatioReport r = offload_ratio(p, t);
  EXPECT_DOUBLE_EQ(r.per_type.at(QuantFormat::Q8_0), 1.0);
  EXPECT_DOUBLE_EQ(r.per_type.at(QuantFormat::FP16), 1.0);
  EXPECT_DOUBLE_EQ(r.total, 1.0);
}

TEST(Planner, PdpPatternSmallAndLargeModels) {
  const MachineConfig cfg = machine("imax3-fpga.json");
  const OffloadPlan big = plan_offload(build_trace(model("qwen3-8b-q8_0.json"), 32, 16), cfg, Policy::Pdp);
  EXPECT_FALSE(big.type_offloaded(QuantFormat::Q8_0));
  EXPECT_TRUE(big.type_offloaded(QuantFormat::FP16));
  const OffloadPlan small = plan_offload(build_trace(model("qwen3-0.6b-q3ks.json"), 32, 16), cfg, Policy::Pdp);
  EXPECT_TRUE(small.type_offloaded(QuantFormat::Q6_K));
  EXPECT_FALSE(small.type_offloaded(QuantFormat::Q3_K));
  EXPECT_TRUE(small.type_offloaded(QuantFormat::FP16));
}

TEST(Planner, PdpChoiceIsFeasibleAndMinimal) {
  for (auto mfile : {"imax3-fpga.json", "imax3-28nm.json"}) {
    const MachineConfig cfg = machine(mfile);
    for (auto file : {"qwen3-0.6b-q3ks.json", "qwen3-1.7b-q8_0.json", "qwen3-8b-q3ks.json"}) {
      const WorkloadTrace t = build_trace(model(file), 16, 4);
      const auto feasible = capacity_feasible(t, cfg);
      const OffloadPlan p = plan_offload(t, cfg, Policy::Pdp);
      for (auto f : kWeightFormats) {
        if (p.type_offloaded(f)) {
          EXPECT_TRUE(feasible.at(f)) << file << " " << format_name(f);
        }
      }
      const double chosen = energy_metrics(simulate_trace(t, p, cfg), cfg).pdp_j;
      for (auto f : kWeightFormats) {
        if (!feasible.count(f) || !feasible.at(f)) continue;
        OffloadPlan q = p;
        q.per_type[f] = !q.per_type[f];
        EXPECT_LE(chosen, energy_metrics(simulate_trace(t, q, cfg), cfg).pdp_j) << file << " " << format_name(f);
      }
    }
  }
}

TEST(Planner, PowerScaleInvariance) {
  const MachineConfig cfg = machine("imax3-28nm.json");
  MachineConfig scaled = cfg;
  for (auto& [f, w] : scaled.power.kernel_watts) w *= 4;
  scaled.power.lmm_watts_per_byte *= 4;
  scaled.power.host_idle_watts *= 4;
  scaled.power.host_active_watts *= 4;
  for (auto file : {"qwen3-0.6b-q8_0.json", "qwen3-8b-q3ks.json"}) {
    const WorkloadTrace t = build_trace(model(file), 16, 4);
    EXPECT_EQ(plan_offload(t, cfg, Policy::Pdp).per_type, plan_offload(t, scaled, Policy::Pdp).per_type) << file;
  }
}

TEST(Planner, EmptyTraceRejected) {
  EXPECT_THROW(plan_offload(WorkloadTrace{}, machine("imax3-fpga.json"), Policy::Pdp), EmptyTrace);
}

TEST(Ratio, NothingOffloaded) {
  const WorkloadTrace t = build_trace(toy(), 4, 2);
  const OffloadRatioReport r = offload_ratio(plan_with({}), t);
  EXPECT_EQ(r.total, 0.0);
  for (const auto& [f, v] : r.per_type) EXPECT_EQ(v, 0.0);
}

TEST(Ratio, HandExample) {
  WorkloadTrace t;
  t.calls.push_back(KernelCall{QuantFormat::FP16, "attn_score", Stage::Prefill, 0, 0, 1, 1, 5, 1});   // 10 ops
  t.calls.push_back(KernelCall{QuantFormat::Q8_0, "ffn_up", Stage::Prefill, 0, 0, 1, 1, 45, 1});     // 90 ops
  const OffloadRatioReport r = offload_ratio(plan_with({QuantFormat::FP16}), t);
  EXPECT_DOUBLE_EQ(r.per_type.at(QuantFormat::FP16), 1.0);
  EXPECT_DOUBLE_EQ(r.per_type.at(QuantFormat::Q8_0), 0.0);
  EXPECT_DOUBLE_EQ(r.total, 0.10);
}

TEST(Ratio, PerCallOverride) {
  WorkloadTrace t;
  t.calls.push_back(KernelCall{QuantFormat::Q8_0, "ffn_up", Stage::Prefill, 0, 0, 1, 1, 30, 1});
  t.calls.push_back(KernelCall{QuantFormat::Q8_0, "ffn_up", Stage::Decode, 1, 0, 1, 1, 10, 1});
  OffloadPlan p = plan_with({QuantFormat::Q8_0});
  p.per_call[1] = false;
  EXPECT_DOUBLE_EQ(offload_ratio(p, t).per_type.at(QuantFormat::Q8_0), 0.75);
}

TEST(Plan, JsonRoundTrip) {
  OffloadPlan p = plan_with({QuantFormat::Q6_K, QuantFormat::FP16}, Policy::Pdp);
  p.per_call[17] = false;
  EXPECT_EQ(plan_from_json(nlohmann::json::parse(to_json(p).dump())), p);
  nlohmann::json bad = nlohmann::json::parse(to_json(p).dump());
  bad["policy"] = "fastest";
  EXPECT_THROW(plan_from_json(bad), ConfigError);
}
