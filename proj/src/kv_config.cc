// Copyright 2026 The envconv Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "envconv/kv_config.h"

#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "envconv/common.h"
#include "envconv/model.h"

namespace envconv {
namespace {

std::string Trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

KeyValues ParseKeyValues(const std::string& text, const std::string& source) {
  KeyValues kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::string t = Trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(fmt::format("{}:{}: expected key = value", source, lineno));
    }
    const std::string key = Trim(t.substr(0, eq));
    if (key.empty()) throw Error(fmt::format("{}:{}: empty key", source, lineno));
    if (!kv.emplace(key, Trim(t.substr(eq + 1))).second) {
      throw Error(fmt::format("{}:{}: duplicate key {}", source, lineno, key));
    }
  }
  return kv;
}

KeyValues ReadKeyValuesFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("cannot read config {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return ParseKeyValues(buf.str(), path.string());
}

std::string FormatKeyValues(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

int ParseIntValue(const std::string& key, const std::string& value) {
  int out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) {
    throw Error(fmt::format("config key {}: '{}' is not an integer", key, value));
  }
  return out;
}

double ParseDoubleValue(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const double d = std::stod(value, &pos);
    if (pos == value.size()) return d;
  } catch (const std::exception&) {
  }
  throw Error(fmt::format("config key {}: '{}' is not a number", key, value));
}

bool ParseBoolValue(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw Error(fmt::format("config key {}: '{}' is not a boolean", key, value));
}

void ApplyModelKeys(const KeyValues& kv, ModelConfig& c, bool allow_unknown) {
  const std::map<std::string, int*> ints = {
      {"model.n_mels", &c.n_mels},
      {"model.max_frames", &c.max_frames},
      {"model.d_model", &c.d_model},
      {"model.encoder_layers", &c.encoder_layers},
      {"model.encoder_kernel", &c.encoder_kernel},
      {"model.decoder_layers", &c.decoder_layers},
      {"model.decoder_heads", &c.decoder_heads},
      {"model.decoder_filter", &c.decoder_filter},
      {"model.decoder_kernel", &c.decoder_kernel},
      {"model.unet_depth", &c.unet_depth},
      {"model.unet_channels", &c.unet_channels},
      {"model.unet_max_channels", &c.unet_max_channels},
      {"model.effect_encoder_kernel", &c.effect_encoder_kernel},
      {"model.predictor_filter", &c.predictor_filter},
      {"model.predictor_kernel", &c.predictor_kernel},
      {"model.classifier_channels", &c.classifier_channels},
      {"model.classifier_kernel", &c.classifier_kernel},
      {"model.pitch_bins", &c.pitch_bins},
      {"model.energy_bins", &c.energy_bins},
  };
  for (const auto& [key, value] : kv) {
    if (auto it = ints.find(key); it != ints.end()) {
      *it->second = ParseIntValue(key, value);
    } else if (key == "model.init_seed") {
      c.init_seed = std::stoull(value);
    } else if (key.rfind("model.", 0) == 0 || !allow_unknown) {
      throw Error(fmt::format("unknown config key {}", key));
    }
  }
}

}  // namespace envconv
