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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cglasim/cli.hpp"
#include "test_util.hpp"

using namespace cglasim;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Outcome o;
  o.code = cli_main(args, out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

const std::vector<std::string> kSim = {"simulate", "--model", "qwen3-0.6b-q3ks.json", "--machine",
                                       "imax3-fpga.json", "--tokens", "32:16"};

}  // namespace

TEST(Args, ParseSimulate) {
  const RunSpec s = parse_args({"sweep", "--model", "m.json", "--tokens", "8:2", "--lmm", "128K", "--lanes", "2",
                                "--set", "dma.setup_s=1e-6", "--sizes", "8K,16K"});
  EXPECT_EQ(s.command, Command::Sweep);
  EXPECT_EQ(s.n_in, 8);
  EXPECT_EQ(s.n_out, 2);
  EXPECT_EQ(s.lmm_bytes, 128.0 * 1024);
  EXPECT_EQ(s.lanes, 2);
  EXPECT_EQ(s.overrides, std::vector<std::string>{"dma.setup_s=1e-6"});
  EXPECT_EQ(s.sizes, (std::vector<double>{8192, 16384}));
  EXPECT_EQ(s.effective_policy(), Policy::Pdp);
  EXPECT_EQ(parse_args({"simulate", "--model", "m"}).effective_policy(), Policy::Capacity);
}

TEST(Args, TokenAndLmmErrors) {
  EXPECT_THROW(parse_tokens("32"), UsageError);
  EXPECT_THROW(parse_tokens("0:4"), UsageError);
  EXPECT_THROW(parse_tokens("4:0"), UsageError);
  EXPECT_THROW(parse_tokens("a:b"), UsageError);
  EXPECT_EQ(parse_lmm("64K"), 65536.0);
  EXPECT_EQ(parse_lmm("512K"), 524288.0);
  EXPECT_THROW(parse_lmm("1M"), UsageError);
  EXPECT_THROW(parse_lmm("48K"), UsageError);
  EXPECT_THROW(parse_lmm("4K"), UsageError);
}

TEST(Exit, UsageErrorsReturnTwo) {
  auto args = kSim;
  args[6] = "32";
  Outcome o = invoke(args);
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("--help"), std::string::npos);
  args = kSim;
  args.insert(args.end(), {"--lmm", "1M"});
  o = invoke(args);
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("512K"), std::string::npos);
  EXPECT_EQ(invoke({"simulate", "--bogus"}).code, 2);
  EXPECT_EQ(invoke({}).code, 2);
}

TEST(Exit, MissingFileNamed) {
  const Outcome o = invoke({"simulate", "--model", "no-such-model.json"});
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("no-such-model.json"), std::string::npos);
}

TEST(Exit, BadOverrideNamesField) {
  auto args = kSim;
  args.insert(args.end(), {"--set", "dma.bandwidth_Bps=0"});
  const Outcome o = invoke(args);
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("dma.bandwidth_Bps"), std::string::npos);
}

TEST(Exit, HelpIsZero) {
  const Outcome o = invoke({"--help"});
  EXPECT_EQ(o.code, 0);
  EXPECT_NE(o.out.find("simulate"), std::string::npos);
}

TEST(Verify, ReportsCounts) {
  const Outcome o = invoke({"verify", "--cases", "100"});
  ASSERT_EQ(o.code, 0) << o.err;
  const auto j = nlohmann::json::parse(o.out);
  EXPECT_EQ(j["schema"], "cglasim.report/v1");
  ASSERT_FALSE(j["suites"].empty());
  for (const auto& s : j["suites"]) {
    EXPECT_GT(s["cases"].get<int64_t>(), 0);
    EXPECT_EQ(s["failures"].get<int64_t>(), 0) << s["name"];
  }
}

TEST(Simulate, JsonBreakdown) {
  const Outcome o = invoke(kSim);
  ASSERT_EQ(o.code, 0) << o.err;
  const auto j = nlohmann::json::parse(o.out);
  const auto& all = j["breakdown"]["all"];
  for (auto k : {"HOST", "LOAD", "EXEC", "DRAIN", "OTHER", "total"}) EXPECT_TRUE(all.contains(k)) << k;
  EXPECT_NEAR(all["total"].get<double>(), 16.3, 0.2);
  EXPECT_EQ(j["run"]["policy"], "capacity");
  EXPECT_TRUE(j["energy"].contains("edp_js"));
}

TEST(Simulate, ByteIdenticalReruns) {
  EXPECT_EQ(invoke(kSim).out, invoke(kSim).out);
  auto csv = kSim;
  csv.insert(csv.end(), {"--format", "csv"});
  EXPECT_EQ(invoke(csv).out, invoke(csv).out);
}

TEST(Simulate, ProvenanceHashesInputs) {
  const auto j = nlohmann::json::parse(invoke(kSim).out);
  const auto& inputs = j["provenance"]["inputs"];
  ASSERT_EQ(inputs.size(), 2u);
  const std::string machine_path = testutil::source_path("data/machines/imax3-fpga.json");
  bool found = false;
  for (const auto& in : inputs) {
    if (in["role"] == "machine") {
      found = true;
      EXPECT_EQ(in["sha256"], sha256_hex(read_file(machine_path)));
    }
  }
  EXPECT_TRUE(found);
}

TEST(Simulate, PlanRoundTrip) {
  const fs::path plan = fs::temp_directory_path() / "cglasim_cli_plan.json";
  auto save = kSim;
  save.insert(save.end(), {"--save-plan", plan.string()});
  const Outcome a = invoke(save);
  ASSERT_EQ(a.code, 0) << a.err;
  auto use = kSim;
  use.insert(use.end(), {"--plan", plan.string()});
  const Outcome b = invoke(use);
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(nlohmann::json::parse(a.out)["breakdown"], nlohmann::json::parse(b.out)["breakdown"]);
  fs::remove(plan);
}

TEST(Compare, JetsonEdp) {
  const Outcome o = invoke({"compare", "--model", "qwen3-1.7b-q8_0.json", "--machine", "imax3-28nm.json",
                            "--tokens", "32:16"});
  ASSERT_EQ(o.code, 0) << o.err;
  const auto doc = nlohmann::json::parse(o.out);
  bool found = false;
  for (const auto& r : doc["rows"]) {
    if (r["device"] == "Jetson AGX Orin 32GB") {
      found = true;
      EXPECT_NEAR(r["edp_js"].get<double>(), 216.6, 0.1);
    }
  }
  EXPECT_TRUE(found);
}

TEST(Profiles, EnvironmentSearchPath) {
  const fs::path dir = fs::temp_directory_path() / "cglasim_profiles";
  fs::create_directories(dir / "models");
  fs::copy_file(testutil::source_path("data/models/qwen3-0.6b-q8_0.json"), dir / "models" / "custom.json",
                fs::copy_options::overwrite_existing);
  ::setenv("CGLA_SIM_PROFILE_DIR", dir.string().c_str(), 1);
  EXPECT_EQ(resolve_profile("custom.json", "models"), (dir / "models" / "custom.json").string());
  const Outcome o = invoke({"simulate", "--model", "custom.json", "--tokens", "4:1"});
  ::unsetenv("CGLA_SIM_PROFILE_DIR");
  EXPECT_EQ(o.code, 0) << o.err;
  EXPECT_THROW(resolve_profile("custom.json", "models"), MissingFile);
  fs::remove_all(dir);
}

TEST(Output, FilesAndSvg) {
  const fs::path out = fs::temp_directory_path() / "cglasim_sweep.csv";
  const fs::path svg = fs::temp_directory_path() / "cglasim_sweep.svg";
  const Outcome o = invoke({"sweep", "--model", "qwen3-0.6b-q8_0.json", "--tokens", "4:1", "--sizes", "32K,64K",
                            "--format", "csv", "--out", out.string(), "--svg", svg.string()});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_TRUE(o.out.empty());
  const auto lines = testutil::read_lines(out.string());
  EXPECT_EQ(lines.size(), 3u);
  EXPECT_EQ(read_file(svg.string()).rfind("<svg", 0), 0u);
  fs::remove(out);
  fs::remove(svg);
}
