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

// Report emission: provenance, JSON/CSV/text tables, SVG bar charts and the
// bundled reference-device points.

#ifndef CGLASIM_REPORT_HPP_
#define CGLASIM_REPORT_HPP_

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "cglasim/error.hpp"
#include "cglasim/perf.hpp"

namespace cglasim {

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  for (unsigned int i = 0; i < len; ++i) {
    s.push_back(kHex[md[i] >> 4]);
    s.push_back(kHex[md[i] & 0xf]);
  }
  return s;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

struct InputRecord {
  std::string role;
  std::string file;  // base name, so reports do not depend on the checkout path
  std::string sha256;
};

struct Provenance {
  std::string tool = "cgla_sim";
  std::string version;
  std::vector<InputRecord> inputs;
  std::vector<std::string> overrides;

  void add(const std::string& role, const std::string& path) {
    inputs.push_back({role, std::filesystem::path(path).filename().string(), sha256_hex(read_file(path))});
  }
};

inline nlohmann::ordered_json to_json(const Provenance& p) {
  nlohmann::ordered_json j;
  j["tool"] = p.tool;
  j["version"] = p.version;
  nlohmann::ordered_json in = nlohmann::ordered_json::array();
  for (const auto& r : p.inputs) in.push_back({{"role", r.role}, {"file", r.file}, {"sha256", r.sha256}});
  j["inputs"] = in;
  j["overrides"] = p.overrides;
  return j;
}

// Comment lines for CSV and text output.
inline std::string provenance_comment(const Provenance& p) {
  std::string s = "# " + p.tool + " " + p.version + "\n";
  for (const auto& r : p.inputs) s += "# " + r.role + " " + r.file + " sha256 " + r.sha256 + "\n";
  for (const auto& o : p.overrides) s += "# set " + o + "\n";
  return s;
}

// ---- Tables ----

inline std::string fmt_num(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q.push_back('"');
    q.push_back(c);
  }
  return q + "\"";
}

inline std::string to_csv(const Table& t) {
  std::string s;
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) s += (i ? "," : "") + csv_field(r[i]);
    s += "\n";
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  return s;
}

// First column left-aligned, the rest right-aligned.
inline std::string to_text(const Table& t) {
  std::vector<std::size_t> w(t.header.size(), 0);
  auto widen = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size() && i < w.size(); ++i) w[i] = std::max(w[i], r[i].size());
  };
  widen(t.header);
  for (const auto& r : t.rows) widen(r);
  std::string s;
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      const std::string& c = i < r.size() ? r[i] : std::string();
      const std::string pad(w[i] - c.size(), ' ');
      if (i) s += "  ";
      s += i == 0 ? c + pad : pad + c;
    }
    while (!s.empty() && s.back() == ' ') s.pop_back();
    s += "\n";
  };
  line(t.header);
  std::size_t total = 0;
  for (auto x : w) total += x;
  s += std::string(total + 2 * (w.empty() ? 0 : w.size() - 1), '-') + "\n";
  for (const auto& r : t.rows) line(r);
  return s;
}

inline nlohmann::ordered_json to_json(const Table& t) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : t.rows) {
    nlohmann::ordered_json o;
    for (std::size_t i = 0; i < t.header.size() && i < r.size(); ++i) o[t.header[i]] = r[i];
    rows.push_back(o);
  }
  return rows;
}

// ---- SVG ----

inline std::string svg_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '&': o += "&amp;"; break;
      case '"': o += "&quot;"; break;
      default: o.push_back(c);
    }
  }
  return o;
}

// Horizontal bars, one per label, scaled to the largest value.
inline std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                                 const std::vector<double>& values, const std::string& unit) {
  const int row_h = 22, left = 170, bar_w = 360, top = 34;
  const int height = top + row_h * static_cast<int>(labels.size()) + 12;
  double vmax = 0;
  for (double v : values) vmax = std::max(vmax, std::isfinite(v) ? v : 0.0);
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + bar_w + 110 << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<text x=\"8\" y=\"20\" font-size=\"14\">" << svg_escape(title) << "</text>\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double v = i < values.size() && std::isfinite(values[i]) ? values[i] : 0.0;
    const int y = top + row_h * static_cast<int>(i);
    const int w = vmax > 0 ? static_cast<int>(std::lround(bar_w * v / vmax)) : 0;
    os << "<text x=\"8\" y=\"" << y + 15 << "\">" << svg_escape(labels[i]) << "</text>\n";
    os << "<rect x=\"" << left << "\" y=\"" << y + 3 << "\" width=\"" << w << "\" height=\"" << row_h - 6
       << "\" fill=\"#4a78b0\"/>\n";
    os << "<text x=\"" << left + w + 6 << "\" y=\"" << y + 15 << "\">" << fmt_num(v) << " " << svg_escape(unit)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

// ---- Reference devices ----

struct RefDevice {
  std::string id;
  std::string name;
  std::optional<double> tdp_w;
};

struct RefPoint {
  std::string device;
  std::string model;
  std::string tokens;
  std::optional<double> latency_s;
  std::optional<double> pdp_j;
  std::optional<double> edp_js;
};

struct ReferenceData {
  std::vector<RefDevice> devices;
  std::vector<RefPoint> points;

  const RefDevice& device(const std::string& id) const {
    for (const auto& d : devices) {
      if (d.id == id) return d;
    }
    throw ConfigError("devices." + id);
  }
};

inline ReferenceData reference_from_json(const nlohmann::json& j) {
  auto opt = [](const nlohmann::json& o, const char* k, const std::string& path) -> std::optional<double> {
    if (!o.contains(k) || o[k].is_null()) return std::nullopt;
    if (!o[k].is_number()) throw ConfigError(path);
    return o[k].get<double>();
  };
  auto str = [](const nlohmann::json& o, const char* k, const std::string& path) {
    if (!o.contains(k) || !o[k].is_string()) throw ConfigError(path);
    return o[k].get<std::string>();
  };
  ReferenceData r;
  if (!j.contains("devices") || !j["devices"].is_array()) throw ConfigError("devices");
  if (!j.contains("points") || !j["points"].is_array()) throw ConfigError("points");
  for (const auto& d : j["devices"]) {
    r.devices.push_back({str(d, "id", "devices.id"), str(d, "name", "devices.name"), opt(d, "tdp_w", "devices.tdp_w")});
  }
  for (const auto& p : j["points"]) {
    RefPoint q;
    q.device = str(p, "device", "points.device");
    q.model = str(p, "model", "points.model");
    q.tokens = str(p, "tokens", "points.tokens");
    q.latency_s = opt(p, "latency_s", "points.latency_s");
    q.pdp_j = opt(p, "pdp_j", "points.pdp_j");
    q.edp_js = opt(p, "edp_js", "points.edp_js");
    (void)r.device(q.device);
    r.points.push_back(q);
  }
  return r;
}

inline ReferenceData load_reference(const std::string& path) {
  return reference_from_json(read_json_file(path));
}

// Fills what PDP = latency * power and EDP = PDP * latency determine.
// Unknown quantities stay NaN.
inline EnergyReport complete_point(const RefPoint& p, const RefDevice& d) {
  const double nan = std::nan("");
  double lat = p.latency_s.value_or(nan), pw = d.tdp_w.value_or(nan);
  double pdp = p.pdp_j.value_or(nan), edp = p.edp_js.value_or(nan);
  for (int pass = 0; pass < 2; ++pass) {
    if (std::isnan(lat) && !std::isnan(pdp) && !std::isnan(pw)) lat = pdp / pw;
    if (std::isnan(lat) && !std::isnan(edp) && !std::isnan(pw)) lat = std::sqrt(edp / pw);
    if (std::isnan(lat) && !std::isnan(edp) && !std::isnan(pdp)) lat = edp / pdp;
    if (std::isnan(pw) && !std::isnan(lat) && !std::isnan(pdp)) pw = pdp / lat;
    if (std::isnan(pw) && !std::isnan(lat) && !std::isnan(edp)) pw = edp / (lat * lat);
    if (std::isnan(pdp) && !std::isnan(lat) && !std::isnan(pw)) pdp = lat * pw;
    if (std::isnan(edp) && !std::isnan(pdp) && !std::isnan(lat)) edp = pdp * lat;
  }
  return EnergyReport{lat, pw, pdp, edp};
}

}  // namespace cglasim

#endif  // CGLASIM_REPORT_HPP_
