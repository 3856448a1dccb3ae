// Copyright 2026 The FedGreen Authors
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

/// \file
/// \brief Run configuration: strict dotted-key schema over a flat key=value
/// file or a JSON document, experimental defaults applied for absent keys.
///
/// Every key is validated against a closed schema; unknown keys and malformed
/// values are reported by name.  parse_run_config() resolves defaults, file
/// entries, then overrides (later entries win), builds a validated Scenario
/// (sampling the device population unless the JSON file lists devices
/// explicitly), and keeps a canonical key=value view for the run manifest.

#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedgreen/errors.hpp"
#include "fedgreen/models.hpp"
#include "fedgreen/sim.hpp"
#include "fedgreen/toy.hpp"

namespace fedgreen {

/// %.9g-style formatting used for every number the artifact emits; identical
/// inputs therefore serialize to identical bytes.
inline std::string format_g9(double value) {
  char buffer[64];
  const std::to_chars_result res =
      std::to_chars(buffer, buffer + sizeof buffer, value, std::chars_format::general, 9);
  return std::string(buffer, res.ptr);
}

struct ResolvedConfig {
  Scenario scenario;
  ToyTrainSpec toy;               // strategy/rounds may be overridden by flags
  CompressionConfig compression;  // toy codec levels
  bool explicit_devices = false;
  std::map<std::string, std::string> resolved;  // canonical view for manifests
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline double config_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  double value = 0.0;
  const char* end = t.data() + t.size();
  const std::from_chars_result res = std::from_chars(t.data(), end, value);
  if (res.ec != std::errc{} || res.ptr != end)
    throw ConfigError(key, "expected a number, got \"" + text + "\"");
  return value;
}

inline std::int64_t config_int(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  std::int64_t value = 0;
  const char* end = t.data() + t.size();
  const std::from_chars_result res = std::from_chars(t.data(), end, value);
  if (res.ec != std::errc{} || res.ptr != end)
    throw ConfigError(key, "expected an integer, got \"" + text + "\"");
  return value;
}

inline std::uint64_t config_uint(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  std::uint64_t value = 0;
  const char* end = t.data() + t.size();
  const std::from_chars_result res = std::from_chars(t.data(), end, value);
  if (res.ec != std::errc{} || res.ptr != end)
    throw ConfigError(key, "expected an unsigned integer, got \"" + text + "\"");
  return value;
}

inline bool config_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  throw ConfigError(key, "expected true/false, got \"" + text + "\"");
}

/// The closed schema: every accepted dotted key.  "devices" is additionally
/// accepted as a JSON array of explicit device profiles.
inline const std::set<std::string>& config_schema() {
  static const std::set<std::string> keys = {
      "seed",
      "device_count",
      "channel_mode",
      "config.S",
      "config.W",
      "config.n",
      "config.N0_dbm_hz",
      "config.T_max",
      "config.J",
      "config.varpi",
      "config.total_data",
      "config.alpha_max",
      "accuracy.kappa1",
      "accuracy.kappa2",
      "accuracy.kappa3",
      "accuracy.kappa4",
      "accuracy.clamp_epsilon",
      "sample.iid",
      "sample.dirichlet_alpha",
      "sample.eps_min",
      "sample.eps_max",
      "sample.fmax_min",
      "sample.fmax_max",
      "sample.bandwidth_min",
      "sample.bandwidth_max",
      "sample.tx_power_min",
      "sample.tx_power_max",
      "sample.rate_min",
      "sample.rate_max",
      "toy.rounds",
      "toy.samples_per_device",
      "toy.learning_rate",
      "toy.fixed_alpha",
      "compression.levels_conv",
      "compression.levels_fc",
  };
  return keys;
}

inline void flatten_json(const nlohmann::json& node, const std::string& prefix,
                         std::map<std::string, std::string>& out,
                         std::vector<DeviceProfile>& devices, bool& have_devices) {
  for (const auto& [name, value] : node.items()) {
    const std::string key = prefix.empty() ? name : prefix + "." + name;
    if (key == "devices") {
      if (!value.is_array()) throw ConfigError("devices", "must be an array of device objects");
      have_devices = true;
      for (const auto& entry : value) {
        if (!entry.is_object()) throw ConfigError("devices", "entries must be objects");
        DeviceProfile d;
        for (const auto& [field, fval] : entry.items()) {
          if (!fval.is_number()) throw ConfigError("devices." + field, "must be a number");
          const double x = fval.get<double>();
          if (field == "device_id") d.device_id = static_cast<int>(x);
          else if (field == "max_freq_hz") d.max_freq_hz = x;
          else if (field == "tx_power_w") d.tx_power_w = x;
          else if (field == "bandwidth_hz") d.bandwidth_hz = x;
          else if (field == "channel_gain") d.channel_gain = x;
          else if (field == "energy_coeff") d.energy_coeff = x;
          else if (field == "data_count") d.data_count = static_cast<std::int64_t>(x);
          else throw ConfigError("devices." + field, "unknown device field");
        }
        devices.push_back(d);
      }
      continue;
    }
    if (value.is_object()) {
      flatten_json(value, key, out, devices, have_devices);
    } else if (value.is_string()) {
      out[key] = value.get<std::string>();
    } else {
      out[key] = value.dump();  // numbers and booleans round-trip as text
    }
  }
}

struct KeyStore {
  std::map<std::string, std::string> entries;
  std::map<std::string, std::string>* resolved;

  bool has(const std::string& key) const { return entries.count(key) != 0; }

  double number(const std::string& key, double fallback) {
    const double v = has(key) ? config_double(key, entries.at(key)) : fallback;
    (*resolved)[key] = format_g9(v);
    return v;
  }
  std::int64_t integer(const std::string& key, std::int64_t fallback) {
    const std::int64_t v = has(key) ? config_int(key, entries.at(key)) : fallback;
    (*resolved)[key] = std::to_string(v);
    return v;
  }
  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) {
    const std::uint64_t v = has(key) ? config_uint(key, entries.at(key)) : fallback;
    (*resolved)[key] = std::to_string(v);
    return v;
  }
  bool boolean(const std::string& key, bool fallback) {
    const bool v = has(key) ? config_bool(key, entries.at(key)) : fallback;
    (*resolved)[key] = v ? "true" : "false";
    return v;
  }
  std::string text(const std::string& key, const std::string& fallback) {
    const std::string v = has(key) ? trim(entries.at(key)) : fallback;
    (*resolved)[key] = v;
    return v;
  }
};

}  // namespace detail

/// Parses `path` (flat key=value with '#' comments, or JSON when the first
/// non-space byte is '{'), layers `overrides` on top, and resolves the full
/// run configuration.  An empty path skips the file and uses pure defaults.
inline ResolvedConfig parse_run_config(
    const std::string& path,
    const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  std::map<std::string, std::string> kv;
  std::vector<DeviceProfile> explicit_devices;
  bool have_devices = false;

  if (!path.empty()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("scenario", "cannot open config file: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string content = buffer.str();

    std::size_t first = content.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && content[first] == '{') {
      nlohmann::json doc;
      try {
        doc = nlohmann::json::parse(content);
      } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("scenario", std::string("JSON parse failure: ") + e.what());
      }
      if (!doc.is_object()) throw ConfigError("scenario", "top-level JSON must be an object");
      detail::flatten_json(doc, "", kv, explicit_devices, have_devices);
    } else {
      std::istringstream lines(content);
      std::string line;
      int line_no = 0;
      while (std::getline(lines, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string stripped = detail::trim(line);
        if (stripped.empty()) continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
          throw ConfigError("scenario",
                            "line " + std::to_string(line_no) + ": expected key=value");
        kv[detail::trim(stripped.substr(0, eq))] = detail::trim(stripped.substr(eq + 1));
      }
    }
  }
  for (const auto& [key, value] : overrides) kv[key] = value;

  for (const auto& [key, value] : kv)
    if (detail::config_schema().count(key) == 0)
      throw ConfigError(key, "unknown configuration key");

  ResolvedConfig out;
  detail::KeyStore store{kv, &out.resolved};

  SystemConfig sys;
  sys.gradient_bits = store.number("config.S", sys.gradient_bits);
  sys.cycles_per_sample = store.number("config.W", sys.cycles_per_sample);
  sys.local_epochs = static_cast<int>(store.integer("config.n", sys.local_epochs));
  const double n0_dbm = store.number("config.N0_dbm_hz", -114.0);
  if (store.has("config.N0_dbm_hz"))
    sys.noise_psd_w_hz = std::pow(10.0, n0_dbm / 10.0) * 1e-3;
  sys.deadline_s = store.number("config.T_max", sys.deadline_s);
  sys.global_rounds = static_cast<int>(store.integer("config.J", sys.global_rounds));
  sys.energy_weight = store.number("config.varpi", sys.energy_weight);
  sys.total_data = store.integer("config.total_data", sys.total_data);
  sys.alpha_max = store.number("config.alpha_max", sys.alpha_max);

  AccuracyModel acc;
  acc.kappa1 = store.number("accuracy.kappa1", acc.kappa1);
  acc.kappa2 = store.number("accuracy.kappa2", acc.kappa2);
  acc.kappa3 = store.number("accuracy.kappa3", acc.kappa3);
  acc.kappa4 = store.number("accuracy.kappa4", acc.kappa4);
  acc.clamp_epsilon = store.number("accuracy.clamp_epsilon", acc.clamp_epsilon);

  SamplingOptions samp;
  samp.iid = store.boolean("sample.iid", samp.iid);
  samp.dirichlet_alpha = store.number("sample.dirichlet_alpha", samp.dirichlet_alpha);
  samp.energy_coeff_min = store.number("sample.eps_min", samp.energy_coeff_min);
  samp.energy_coeff_max = store.number("sample.eps_max", samp.energy_coeff_max);
  samp.max_freq_min_hz = store.number("sample.fmax_min", samp.max_freq_min_hz);
  samp.max_freq_max_hz = store.number("sample.fmax_max", samp.max_freq_max_hz);
  samp.bandwidth_min_hz = store.number("sample.bandwidth_min", samp.bandwidth_min_hz);
  samp.bandwidth_max_hz = store.number("sample.bandwidth_max", samp.bandwidth_max_hz);
  samp.tx_power_min_w = store.number("sample.tx_power_min", samp.tx_power_min_w);
  samp.tx_power_max_w = store.number("sample.tx_power_max", samp.tx_power_max_w);
  samp.target_rate_min_bps = store.number("sample.rate_min", samp.target_rate_min_bps);
  samp.target_rate_max_bps = store.number("sample.rate_max", samp.target_rate_max_bps);

  const std::uint64_t seed = store.unsigned_integer("seed", 0);
  const ChannelMode mode = channel_mode_from_name(store.text("channel_mode", "static"));

  if (have_devices) {
    if (explicit_devices.empty()) throw ConfigError("devices", "device array is empty");
    if (store.has("device_count") &&
        detail::config_int("device_count", kv.at("device_count")) !=
            static_cast<std::int64_t>(explicit_devices.size()))
      throw ConfigError("device_count", "does not match the explicit device list");
    out.resolved["device_count"] = std::to_string(explicit_devices.size());

    std::int64_t data_sum = 0;
    for (const DeviceProfile& d : explicit_devices) data_sum += d.data_count;
    if (!store.has("config.total_data")) {
      sys.total_data = data_sum;
      out.resolved["config.total_data"] = std::to_string(data_sum);
    } else if (sys.total_data != data_sum) {
      throw ConfigError("config.total_data",
                        "explicit devices sum to " + std::to_string(data_sum));
    }

    out.scenario.devices = std::move(explicit_devices);
    out.scenario.config = sys;
    out.scenario.accuracy_model = acc;
    out.scenario.seed = seed;
    out.scenario.channel_mode = mode;
    out.scenario.sampling = samp;
    validate_scenario(out.scenario);
    out.explicit_devices = true;
  } else {
    const int device_count = static_cast<int>(store.integer("device_count", 16));
    if (device_count < 1) throw ConfigError("device_count", "must be at least 1");
    out.scenario = sample_scenario(device_count, seed, samp, sys, acc);
    out.scenario.channel_mode = mode;
  }

  out.toy.seed = seed;
  out.toy.rounds = static_cast<int>(store.integer("toy.rounds", 40));
  out.toy.samples_per_device =
      static_cast<int>(store.integer("toy.samples_per_device", 64));
  out.toy.learning_rate = store.number("toy.learning_rate", 0.05);
  out.toy.fixed_alpha = store.number("toy.fixed_alpha", 0.0);
  validate_toy_spec(out.toy);

  out.compression.levels_conv =
      static_cast<int>(store.integer("compression.levels_conv", 8));
  out.compression.levels_fc = static_cast<int>(store.integer("compression.levels_fc", 4));
  for (const auto& [key, levels] :
       {std::pair<const char*, int>{"compression.levels_conv", out.compression.levels_conv},
        std::pair<const char*, int>{"compression.levels_fc", out.compression.levels_fc}})
    if (levels < 2 || levels > kMaxLevels || (levels & (levels - 1)) != 0)
      throw ConfigError(key, "must be a power of two in [2, 128]");

  return out;
}

/// Narrow entry point: configuration to validated Scenario.
inline Scenario parse_config(
    const std::string& path,
    const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  return parse_run_config(path, overrides).scenario;
}

}  // namespace fedgreen
