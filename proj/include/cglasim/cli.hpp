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

// Command-line surface: argument parsing, profile lookup and the commands.
// Exit codes: 0 success, 1 verification failure or internal fault, 2 usage,
// missing file or invalid input.

#ifndef CGLASIM_CLI_HPP_
#define CGLASIM_CLI_HPP_

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cglasim/error.hpp"
#include "cglasim/kernels.hpp"
#include "cglasim/machine.hpp"
#include "cglasim/perf.hpp"
#include "cglasim/plan.hpp"
#include "cglasim/planner.hpp"
#include "cglasim/quant.hpp"
#include "cglasim/report.hpp"
#include "cglasim/sweep.hpp"
#include "cglasim/verify.hpp"
#include "cglasim/workload.hpp"

#ifndef CGLASIM_VERSION
#define CGLASIM_VERSION "0.0.0"
#endif

namespace cglasim {

enum class Command : uint8_t { Verify, Quantize, Dot, Simulate, Sweep, Scale, Compare };
enum class OutFormat : uint8_t { Json, Csv, Table };

constexpr std::string_view command_name(Command c) {
  switch (c) {
    case Command::Verify: return "verify";
    case Command::Quantize: return "quantize";
    case Command::Dot: return "dot";
    case Command::Simulate: return "simulate";
    case Command::Sweep: return "sweep";
    case Command::Scale: return "scale";
    case Command::Compare: return "compare";
  }
  return "?";
}

class UsageError : public Error {
 public:
  using Error::Error;
};

// what() is the path that could not be found.
class MissingFile : public Error {
 public:
  using Error::Error;
};

class HelpRequested : public Error {
 public:
  using Error::Error;
};

struct RunSpec {
  Command command = Command::Simulate;
  std::string model;
  std::string machine = "imax3-fpga.json";
  int64_t n_in = 32;
  int64_t n_out = 16;
  int lanes = 0;           // 0: keep the profile's lanes_used
  double lmm_bytes = 0;    // 0: keep the profile's lmm_bytes
  std::optional<Policy> policy;
  std::string out;
  OutFormat format = OutFormat::Json;
  std::string svg;
  std::vector<std::string> overrides;
  std::vector<double> sizes;
  std::vector<int> lane_list;
  std::string plan_in;
  std::string plan_out;
  std::string reference = "reference_devices.json";
  // verify / quantize / dot
  std::size_t cases = 1000;
  uint64_t seed = 1;
  QuantFormat qformat = QuantFormat::Q8_0;
  std::string input;
  std::string weights;
  std::string acts;
  std::size_t count = 1024;
  std::size_t blocks = 4;

  // simulate and scale report the full selection; sweep and compare pick
  // the lowest-PDP subset at each point.
  Policy effective_policy() const {
    if (policy) return *policy;
    return command == Command::Sweep || command == Command::Compare ? Policy::Pdp : Policy::Capacity;
  }
};

// "IN:OUT" with IN >= 1 and OUT >= 1.
inline std::pair<int64_t, int64_t> parse_tokens(std::string_view s) {
  const auto colon = s.find(':');
  if (colon == std::string_view::npos) throw UsageError("--tokens must be IN:OUT, got '" + std::string(s) + "'");
  auto num = [&](std::string_view part) {
    int64_t v = 0;
    const auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (part.empty() || ec != std::errc() || p != part.data() + part.size() || v < 1) {
      throw UsageError("--tokens must be two positive integers IN:OUT, got '" + std::string(s) + "'");
    }
    return v;
  };
  return {num(s.substr(0, colon)), num(s.substr(colon + 1))};
}

// Bytes with an optional K or M suffix (binary units). Must be a power of two
// within the local-memory bounds.
inline double parse_lmm(std::string_view s) {
  std::string_view digits = s;
  double unit = 1;
  if (!s.empty() && (s.back() == 'K' || s.back() == 'k')) {
    unit = kKiB;
    digits.remove_suffix(1);
  } else if (!s.empty() && (s.back() == 'M' || s.back() == 'm')) {
    unit = kKiB * kKiB;
    digits.remove_suffix(1);
  }
  uint64_t v = 0;
  const auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
  if (digits.empty() || ec != std::errc() || p != digits.data() + digits.size()) {
    throw UsageError("--lmm must be a size like 64K, got '" + std::string(s) + "'");
  }
  const double bytes = static_cast<double>(v) * unit;
  if (bytes > kLmmMax) throw UsageError("--lmm " + std::string(s) + " exceeds the 512K local memory bound");
  if (bytes < kLmmMin) throw UsageError("--lmm " + std::string(s) + " is below the 8K minimum");
  if (!is_power_of_two(bytes)) throw UsageError("--lmm " + std::string(s) + " is not a power of two");
  return bytes;
}

inline std::string lmm_label(double bytes) {
  if (bytes >= kKiB && std::fmod(bytes, kKiB) == 0) return fmt_num(bytes / kKiB) + "K";
  return fmt_num(bytes);
}

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace detail

inline RunSpec parse_args(const std::vector<std::string>& args) {
  RunSpec spec;
  CLI::App app{"Functional and analytical simulator for CGLA quantized LLM kernels", "cgla_sim"};
  app.set_version_flag("--version", std::string(CGLASIM_VERSION));
  app.require_subcommand(1, 1);

  std::string tokens = "32:16", lmm, policy, format = "json", sizes, lanes_list, qformat;
  const std::vector<std::string> policies = {"capacity", "pdp"};
  const std::vector<std::string> formats = {"json", "csv", "table"};

  auto output_opts = [&](CLI::App* s) {
    s->add_option("--out", spec.out, "write the report to this file instead of stdout");
    s->add_option("--format", format, "json, csv or table")->check(CLI::IsMember(formats));
  };
  auto sim_opts = [&](CLI::App* s) {
    s->add_option("--model", spec.model, "model profile (file or name on the profile path)")->required();
    s->add_option("--machine", spec.machine, "machine profile")->capture_default_str();
    s->add_option("--tokens", tokens, "prompt and generated tokens, IN:OUT")->capture_default_str();
    s->add_option("--lanes", spec.lanes, "active lanes (default: profile)");
    s->add_option("--lmm", lmm, "local memory per PE, e.g. 64K (default: profile)");
    s->add_option("--policy", policy, "offload policy: capacity or pdp")->check(CLI::IsMember(policies));
    s->add_option("--set", spec.overrides, "override a machine field, e.g. dma.setup_s=1e-6");
    s->add_option("--svg", spec.svg, "also render a bar chart to this file");
    output_opts(s);
  };

  auto* verify = app.add_subcommand("verify", "run the kernel and decoder self-checks");
  verify->add_option("--cases", spec.cases, "random cases per format")->capture_default_str();
  verify->add_option("--seed", spec.seed, "random seed")->capture_default_str();
  output_opts(verify);

  auto* quantize = app.add_subcommand("quantize", "quantize values into block fixture lines");
  quantize->add_option("--type", qformat, "FP16, Q8_0, Q3_K, Q6_K or Q8_K")->required();
  quantize->add_option("--input", spec.input, "whitespace-separated values (default: random)");
  quantize->add_option("--count", spec.count, "random values to generate")->capture_default_str();
  quantize->add_option("--seed", spec.seed, "random seed")->capture_default_str();
  quantize->add_option("--out", spec.out, "output file (default stdout)");

  auto* dot = app.add_subcommand("dot", "run one kernel dot product next to its reference");
  dot->add_option("--type", qformat, "weight format: FP16, Q8_0, Q3_K or Q6_K")->required();
  dot->add_option("--weights", spec.weights, "weight fixture file");
  dot->add_option("--acts", spec.acts, "activation fixture file");
  dot->add_option("--blocks", spec.blocks, "random blocks when no fixtures are given")->capture_default_str();
  dot->add_option("--seed", spec.seed, "random seed")->capture_default_str();
  output_opts(dot);

  auto* simulate = app.add_subcommand("simulate", "phase breakdown and energy for one run");
  sim_opts(simulate);
  simulate->add_option("--plan", spec.plan_in, "use this offload plan instead of planning");
  simulate->add_option("--save-plan", spec.plan_out, "write the offload plan used");

  auto* sweep = app.add_subcommand("sweep", "PDP and EDP across local memory sizes");
  sim_opts(sweep);
  sweep->add_option("--sizes", sizes, "comma-separated sizes (default 8K..512K)");

  auto* scale = app.add_subcommand("scale", "latency across lane counts");
  sim_opts(scale);
  scale->add_option("--lane-list", lanes_list, "comma-separated lane counts (default 1..lanes_total)");

  auto* compare = app.add_subcommand("compare", "side-by-side PDP/EDP against reference devices");
  sim_opts(compare);
  compare->add_option("--reference", spec.reference, "reference device data")->capture_default_str();

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    for (auto* s : app.get_subcommands()) throw HelpRequested(s->help());
    throw HelpRequested(app.help());
  } catch (const CLI::CallForVersion&) {
    throw HelpRequested(std::string(CGLASIM_VERSION) + "\n");
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  const std::pair<CLI::App*, Command> table[] = {
      {verify, Command::Verify}, {quantize, Command::Quantize}, {dot, Command::Dot},
      {simulate, Command::Simulate}, {sweep, Command::Sweep}, {scale, Command::Scale},
      {compare, Command::Compare}};
  for (const auto& [sub, cmd] : table) {
    if (sub->parsed()) spec.command = cmd;
  }
  spec.format = format == "csv" ? OutFormat::Csv : format == "table" ? OutFormat::Table : OutFormat::Json;
  std::tie(spec.n_in, spec.n_out) = parse_tokens(tokens);
  if (!lmm.empty()) spec.lmm_bytes = parse_lmm(lmm);
  if (!policy.empty()) spec.policy = parse_policy(policy);
  if (spec.lanes < 0 || spec.lanes > 8) throw UsageError("--lanes must be between 1 and 8");
  for (const auto& s : detail::split_list(sizes)) spec.sizes.push_back(parse_lmm(s));
  for (const auto& s : detail::split_list(lanes_list)) {
    int v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || v < 1 || v > 8) {
      throw UsageError("--lane-list entries must be integers in 1..8, got '" + s + "'");
    }
    spec.lane_list.push_back(v);
  }
  if (!qformat.empty()) {
    try {
      spec.qformat = parse_format(qformat);
    } catch (const UnsupportedFormat&) {
      throw UsageError("--type: unknown format '" + qformat + "'");
    }
    if (spec.command == Command::Dot && spec.qformat == QuantFormat::Q8_K) {
      throw UsageError("--type: Q8_K is an activation format");
    }
  }
  if (spec.command == Command::Verify && spec.cases == 0) throw UsageError("--cases must be positive");
  return spec;
}

// Search order: the name as given, each directory in CGLA_SIM_PROFILE_DIR
// (colon-separated, also its `kind` subdirectory), then the bundled data.
inline std::string resolve_profile(const std::string& name, const std::string& kind) {
  namespace fs = std::filesystem;
  const fs::path p(name);
  if (fs::is_regular_file(p)) return p.string();
  std::vector<fs::path> dirs;
  if (!p.is_absolute()) {
    if (const char* env = std::getenv("CGLA_SIM_PROFILE_DIR")) {
      std::string list(env);
      std::size_t start = 0;
      while (start <= list.size()) {
        const auto end = std::min(list.find(':', start), list.size());
        if (end > start) {
          dirs.emplace_back(list.substr(start, end - start));
          dirs.push_back(dirs.back() / kind);
        }
        start = end + 1;
      }
    }
#ifdef CGLASIM_DATA_DIR
    dirs.push_back(fs::path(CGLASIM_DATA_DIR) / kind);
    dirs.emplace_back(CGLASIM_DATA_DIR);
#endif
  }
  for (const auto& d : dirs) {
    if (fs::is_regular_file(d / p)) return (d / p).string();
  }
  throw MissingFile(name);
}

struct Rendered {
  std::string body;
  std::string svg;
  int exit_code = 0;
};

namespace detail {

inline nlohmann::ordered_json report_head(const RunSpec& spec, const Provenance& prov) {
  nlohmann::ordered_json j;
  j["schema"] = "cglasim.report/v1";
  j["command"] = command_name(spec.command);
  j["provenance"] = to_json(prov);
  return j;
}

inline std::string emit(const RunSpec& spec, const Provenance& prov, const nlohmann::ordered_json& doc,
                        const std::vector<Table>& tables) {
  if (spec.format == OutFormat::Json) return doc.dump(2) + "\n";
  std::string s = provenance_comment(prov);
  for (std::size_t i = 0; i < tables.size(); ++i) {
    if (i) s += "\n";
    s += spec.format == OutFormat::Csv ? to_csv(tables[i]) : to_text(tables[i]);
  }
  return s;
}

struct Loaded {
  ModelConfig model;
  MachineConfig machine;
  WorkloadTrace trace;
  Provenance prov;
};

inline Loaded load_inputs(const RunSpec& spec) {
  Loaded l;
  l.prov.version = CGLASIM_VERSION;
  const std::string model_path = resolve_profile(spec.model, "models");
  const std::string machine_path = resolve_profile(spec.machine, "machines");
  l.prov.add("model", model_path);
  l.prov.add("machine", machine_path);
  l.prov.overrides = spec.overrides;
  l.model = load_model_config(model_path);
  nlohmann::json doc = read_json_file(machine_path);
  for (const auto& o : spec.overrides) apply_override(doc, o);
  l.machine = machine_from_json(doc);
  if (spec.lanes > 0) l.machine.lanes_used = spec.lanes;
  if (spec.lmm_bytes > 0) l.machine.lmm_bytes = spec.lmm_bytes;
  validate(l.machine);
  l.trace = build_trace(l.model, spec.n_in, spec.n_out);
  return l;
}

inline nlohmann::ordered_json run_json(const RunSpec& spec, const Loaded& l) {
  nlohmann::ordered_json r;
  r["model"] = l.model.name;
  r["machine"] = l.machine.name;
  r["tokens"] = std::to_string(spec.n_in) + ":" + std::to_string(spec.n_out);
  r["lanes"] = l.machine.lanes_used;
  r["lmm_bytes"] = l.machine.lmm_bytes;
  r["policy"] = policy_name(spec.effective_policy());
  return r;
}

inline std::string offloaded_label(const OffloadPlan& p) {
  std::string s;
  for (auto f : kWeightFormats) {
    if (!p.type_offloaded(f)) continue;
    if (!s.empty()) s += "+";
    s += format_name(f);
  }
  return s.empty() ? "none" : s;
}

inline Rendered cmd_verify(const RunSpec& spec) {
  Provenance prov;
  prov.version = CGLASIM_VERSION;
  const auto suites = run_verification(spec.cases, spec.seed);
  nlohmann::ordered_json doc = report_head(spec, prov);
  doc["seed"] = spec.seed;
  doc["cases_per_format"] = spec.cases;
  Table t{{"suite", "cases", "failures", "status", "first_failure"}, {}};
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  bool ok = true;
  for (const auto& s : suites) {
    ok = ok && s.ok();
    arr.push_back({{"name", s.name}, {"cases", s.cases}, {"failures", s.failures}, {"first_failure", s.first_failure}});
    t.rows.push_back({s.name, std::to_string(s.cases), std::to_string(s.failures), s.ok() ? "pass" : "FAIL",
                      s.first_failure});
  }
  doc["suites"] = arr;
  doc["ok"] = ok;
  return {emit(spec, prov, doc, {t}), "", ok ? 0 : 1};
}

inline std::vector<float> read_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile(path);
  std::vector<float> v;
  std::string tok;
  while (in >> tok) {
    try {
      std::size_t used = 0;
      v.push_back(std::stof(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw InvalidValue(path + ": not a number: " + tok);
    }
  }
  return v;
}

inline Rendered cmd_quantize(const RunSpec& spec) {
  std::vector<float> x;
  if (!spec.input.empty()) {
    x = read_values(spec.input);
  } else {
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<float> g(0.0f, 1.0f);
    x.resize(spec.count);
    for (auto& v : x) v = g(rng);
  }
  const std::size_t unit = spec.qformat == QuantFormat::FP16 ? 16 : block_elems(spec.qformat);
  if (x.size() % unit != 0) {
    throw ShapeError(std::to_string(x.size()) + " values are not a multiple of " + std::to_string(unit));
  }
  std::string s;
  for (std::size_t i = 0; i < x.size(); i += unit) {
    s += to_fixture_line(quantize(spec.qformat, std::span<const float>(x).subspan(i, unit))) + "\n";
  }
  return {s, "", 0};
}

inline QuantTensor read_fixture(const std::string& path, QuantFormat want) {
  std::ifstream in(path);
  if (!in) throw MissingFile(path);
  std::vector<uint8_t> bytes;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const QuantTensor t = from_fixture_line(line);
    if (format_of(t) != want) {
      throw FormatError(path + ": expected " + std::string(format_name(want)) + " blocks");
    }
    const auto b = encode_blocks(t);
    bytes.insert(bytes.end(), b.begin(), b.end());
  }
  return decode_blocks(want, bytes);
}

inline Rendered cmd_dot(const RunSpec& spec) {
  const QuantFormat f = spec.qformat;
  Provenance prov;
  prov.version = CGLASIM_VERSION;
  QuantTensor w, a;
  if (!spec.weights.empty() || !spec.acts.empty()) {
    if (spec.weights.empty() || spec.acts.empty()) throw UsageError("dot needs both --weights and --acts");
    w = read_fixture(spec.weights, f);
    a = read_fixture(spec.acts, activation_format(f));
    prov.add("weights", spec.weights);
    prov.add("acts", spec.acts);
  } else {
    std::mt19937_64 rng(spec.seed);
    std::tie(w, a) = random_operands(f, rng, spec.blocks);
  }
  const DotResult ex = exec_dot(f, w, a);
  const RefDot ref = ref_dot(f, w, a);
  const bool identical = std::bit_cast<uint64_t>(ex.value) == std::bit_cast<uint64_t>(ref.value);
  nlohmann::ordered_json doc = report_head(spec, prov);
  doc["format"] = format_name(f);
  doc["elements"] = element_count(w);
  doc["exec"] = ex.value;
  doc["exec_hex"] = detail::hexf(ex.value);
  doc["ref"] = ref.value;
  doc["ref_hex"] = detail::hexf(ref.value);
  doc["bit_identical"] = identical;
  doc["integer_partials"] = ex.integer_partials;
  doc["ref_partials"] = ref.partials;
  doc["cycles"] = ex.cycles;
  doc["pe_used"] = ex.pe_used;
  doc["arith_units"] = ex.arith_units;
  Table t{{"field", "value"},
          {{"format", std::string(format_name(f))},
           {"elements", std::to_string(element_count(w))},
           {"exec", detail::hexf(ex.value)},
           {"ref", detail::hexf(ref.value)},
           {"bit_identical", identical ? "yes" : "no"},
           {"cycles", fmt_num(ex.cycles)},
           {"pe_used", std::to_string(ex.pe_used)},
           {"arith_units", std::to_string(ex.arith_units)}}};
  return {emit(spec, prov, doc, {t}), "", 0};
}

inline OffloadPlan choose_plan(const RunSpec& spec, const Loaded& l) {
  if (!spec.plan_in.empty()) {
    const std::string path = resolve_profile(spec.plan_in, "plans");
    return plan_from_json(read_json_file(path));
  }
  return plan_offload(l.trace, l.machine, spec.effective_policy());
}

inline Table breakdown_table(const PhaseBreakdown& bd) {
  Table t{{"stage"}, {}};
  for (auto ph : kPhases) t.header.emplace_back(phase_name(ph));
  t.header.push_back("OTHER");
  t.header.push_back("total");
  auto row = [&](const char* name, const PhaseTimes& p) {
    std::vector<std::string> r{name};
    for (auto ph : kPhases) r.push_back(fmt_num(p[ph]));
    r.push_back(fmt_num(p.other()));
    r.push_back(fmt_num(p.total()));
    t.rows.push_back(r);
  };
  row("prefill", bd.prefill);
  row("decode", bd.decode);
  row("all", bd.combined());
  return t;
}

inline Table energy_table(const EnergyReport& e) {
  return Table{{"metric", "value"},
               {{"latency_s", fmt_num(e.latency_s)},
                {"avg_power_w", fmt_num(e.avg_power_w)},
                {"pdp_j", fmt_num(e.pdp_j)},
                {"edp_js", fmt_num(e.edp_js)}}};
}

inline Table offload_table(const OffloadPlan& p, const OffloadRatioReport& r) {
  Table t{{"type", "offloaded", "mac_share"}, {}};
  for (auto f : kWeightFormats) {
    auto it = r.per_type.find(f);
    if (it == r.per_type.end()) continue;
    t.rows.push_back({std::string(format_name(f)), p.type_offloaded(f) ? "yes" : "no", fmt_num(it->second)});
  }
  t.rows.push_back({"total", "", fmt_num(r.total)});
  return t;
}

inline Rendered cmd_simulate(const RunSpec& spec) {
  const Loaded l = load_inputs(spec);
  Provenance prov = l.prov;
  if (!spec.plan_in.empty()) prov.add("plan", resolve_profile(spec.plan_in, "plans"));
  const OffloadPlan plan = choose_plan(spec, l);
  const PhaseBreakdown bd = simulate_trace(l.trace, plan, l.machine);
  const EnergyReport en = energy_metrics(bd, l.machine);
  const OffloadRatioReport ratio = offload_ratio(plan, l.trace);
  nlohmann::ordered_json doc = report_head(spec, prov);
  doc["run"] = run_json(spec, l);
  doc["plan"] = to_json(plan);
  doc["offload_ratio"] = to_json(ratio);
  doc["breakdown"] = to_json(bd);
  doc["energy"] = to_json(en);
  Rendered r{emit(spec, prov, doc, {breakdown_table(bd), offload_table(plan, ratio), energy_table(en)}), "", 0};
  if (!spec.svg.empty()) {
    const PhaseTimes all = bd.combined();
    r.svg = svg_bar_chart(l.model.name + " on " + l.machine.name + ": phase breakdown",
                          {"HOST", "LOAD", "EXEC", "DRAIN", "OTHER"},
                          {all[Phase::Host], all[Phase::Load], all[Phase::Exec], all[Phase::Drain], all.other()},
                          "s");
  }
  if (!spec.plan_out.empty()) {
    std::ofstream out(spec.plan_out);
    if (!out) throw MissingFile(spec.plan_out);
    out << to_json(plan).dump(2) << "\n";
  }
  return r;
}

inline Rendered cmd_sweep(const RunSpec& spec) {
  const Loaded l = load_inputs(spec);
  const auto sizes = spec.sizes.empty() ? default_lmm_sizes() : spec.sizes;
  const auto pts = lmm_sweep(l.trace, sizes, l.machine, spec.effective_policy());
  std::size_t best = 0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (pts[i].energy.pdp_j < pts[best].energy.pdp_j) best = i;
  }
  nlohmann::ordered_json doc = report_head(spec, l.prov);
  doc["run"] = run_json(spec, l);
  doc["run"].erase("lmm_bytes");
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  Table t{{"lmm", "offloaded", "latency_s", "avg_power_w", "pdp_j", "edp_js", "pdp_min"}, {}};
  std::vector<std::string> labels;
  std::vector<double> pdps;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto& p = pts[i];
    nlohmann::ordered_json o;
    o["lmm_bytes"] = p.lmm_bytes;
    o["plan"] = to_json(p.plan)["per_type"];
    o["energy"] = to_json(p.energy);
    arr.push_back(o);
    t.rows.push_back({lmm_label(p.lmm_bytes), offloaded_label(p.plan), fmt_num(p.energy.latency_s),
                      fmt_num(p.energy.avg_power_w), fmt_num(p.energy.pdp_j), fmt_num(p.energy.edp_js),
                      i == best ? "*" : ""});
    labels.push_back(lmm_label(p.lmm_bytes));
    pdps.push_back(p.energy.pdp_j);
  }
  doc["points"] = arr;
  doc["pdp_min_lmm_bytes"] = pts.empty() ? 0.0 : pts[best].lmm_bytes;
  Rendered r{emit(spec, l.prov, doc, {t}), "", 0};
  if (!spec.svg.empty()) r.svg = svg_bar_chart(l.model.name + ": PDP by local memory size", labels, pdps, "J");
  return r;
}

inline Rendered cmd_scale(const RunSpec& spec) {
  const Loaded l = load_inputs(spec);
  const OffloadPlan plan = choose_plan(spec, l);
  std::vector<int> lanes = spec.lane_list;
  if (lanes.empty()) {
    for (int i = 1; i <= l.machine.lanes_total; ++i) lanes.push_back(i);
  }
  const auto pts = lane_scaling_curve(l.trace, plan, l.machine, lanes);
  nlohmann::ordered_json doc = report_head(spec, l.prov);
  doc["run"] = run_json(spec, l);
  doc["run"].erase("lanes");
  doc["plan"] = to_json(plan);
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  Table t{{"lanes", "latency_s", "perf"}, {}};
  std::vector<std::string> labels;
  std::vector<double> perf;
  for (const auto& p : pts) {
    arr.push_back({{"lanes", p.lanes}, {"latency_s", p.latency_s}, {"perf", p.perf}});
    t.rows.push_back({std::to_string(p.lanes), fmt_num(p.latency_s), fmt_num(p.perf)});
    labels.push_back(std::to_string(p.lanes) + " lanes");
    perf.push_back(p.perf);
  }
  doc["points"] = arr;
  Rendered r{emit(spec, l.prov, doc, {t}), "", 0};
  if (!spec.svg.empty()) r.svg = svg_bar_chart(l.model.name + ": speedup over one lane", labels, perf, "x");
  return r;
}

inline Rendered cmd_compare(const RunSpec& spec) {
  const Loaded l = load_inputs(spec);
  Provenance prov = l.prov;
  const std::string ref_path = resolve_profile(spec.reference, "");
  prov.add("reference", ref_path);
  const ReferenceData ref = load_reference(ref_path);
  const OffloadPlan plan = choose_plan(spec, l);
  const EnergyReport sim = energy_metrics(simulate_trace(l.trace, plan, l.machine), l.machine);
  const std::string tokens = std::to_string(spec.n_in) + ":" + std::to_string(spec.n_out);

  nlohmann::ordered_json doc = report_head(spec, prov);
  doc["run"] = run_json(spec, l);
  Table t{{"device", "source", "power_w", "latency_s", "pdp_j", "edp_js"}, {}};
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  std::vector<std::string> labels;
  std::vector<double> pdps;
  auto add = [&](const std::string& device, const std::string& source, const EnergyReport& e) {
    rows.push_back({{"device", device}, {"source", source}, {"power_w", e.avg_power_w}, {"latency_s", e.latency_s},
                    {"pdp_j", e.pdp_j}, {"edp_js", e.edp_js}});
    t.rows.push_back({device, source, fmt_num(e.avg_power_w), fmt_num(e.latency_s), fmt_num(e.pdp_j),
                      fmt_num(e.edp_js)});
    labels.push_back(device);
    pdps.push_back(e.pdp_j);
  };
  add(l.machine.name, "simulated", sim);
  for (const auto& p : ref.points) {
    if (p.model != l.model.name || p.tokens != tokens) continue;
    const RefDevice& d = ref.device(p.device);
    add(d.name, "reference", complete_point(p, d));
  }
  // NaN is not valid JSON; unknown values are written as null.
  for (auto& row : rows) {
    for (auto& [k, v] : row.items()) {
      if (v.is_number_float() && std::isnan(v.get<double>())) v = nullptr;
    }
  }
  doc["rows"] = rows;
  Rendered r{emit(spec, prov, doc, {t}), "", 0};
  if (!spec.svg.empty()) r.svg = svg_bar_chart(l.model.name + " [" + tokens + "]: PDP", labels, pdps, "J");
  return r;
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw MissingFile(path);
  f << text;
}

}  // namespace detail

inline Rendered render(const RunSpec& spec) {
  switch (spec.command) {
    case Command::Verify: return detail::cmd_verify(spec);
    case Command::Quantize: return detail::cmd_quantize(spec);
    case Command::Dot: return detail::cmd_dot(spec);
    case Command::Simulate: return detail::cmd_simulate(spec);
    case Command::Sweep: return detail::cmd_sweep(spec);
    case Command::Scale: return detail::cmd_scale(spec);
    case Command::Compare: return detail::cmd_compare(spec);
  }
  throw UsageError("unknown command");
}

// Report files are written once, after the command has finished.
inline int run(const RunSpec& spec, std::ostream& out, std::ostream& err) {
  try {
    const Rendered r = render(spec);
    if (spec.out.empty()) {
      out << r.body;
    } else {
      detail::write_file(spec.out, r.body);
    }
    if (!spec.svg.empty() && !r.svg.empty()) detail::write_file(spec.svg, r.svg);
    return r.exit_code;
  } catch (const MissingFile& e) {
    err << "cgla_sim: file not found: " << e.what() << "\n";
  } catch (const ConfigError& e) {
    err << "cgla_sim: invalid configuration: " << e.what() << "\n";
  } catch (const UsageError& e) {
    err << "cgla_sim: " << e.what() << "\n";
  } catch (const Error& e) {
    err << "cgla_sim: " << e.what() << "\n";
  } catch (const nlohmann::json::exception& e) {
    err << "cgla_sim: " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "cgla_sim: internal error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

inline int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunSpec spec;
  try {
    spec = parse_args(args);
  } catch (const HelpRequested& h) {
    out << h.what();
    return 0;
  } catch (const Error& e) {
    err << "cgla_sim: " << e.what() << "\nRun with --help for usage.\n";
    return 2;
  }
  return run(spec, out, err);
}

}  // namespace cglasim

#endif  // CGLASIM_CLI_HPP_
