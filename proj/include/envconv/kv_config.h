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

// Plain-text configuration format.
//
//   # comment
//   section.key = value
//
// One assignment per line; blank lines and '#' comments are ignored. Keys are
// unique. Values run to the end of the line with surrounding spaces trimmed.

#ifndef ENVCONV_KV_CONFIG_H_
#define ENVCONV_KV_CONFIG_H_

#include <filesystem>
#include <map>
#include <string>

namespace envconv {

struct ModelConfig;

using KeyValues = std::map<std::string, std::string>;

// `source` names the text in error messages.
KeyValues ParseKeyValues(const std::string& text, const std::string& source);
KeyValues ReadKeyValuesFile(const std::filesystem::path& path);
std::string FormatKeyValues(const KeyValues& kv);

int ParseIntValue(const std::string& key, const std::string& value);
double ParseDoubleValue(const std::string& key, const std::string& value);
bool ParseBoolValue(const std::string& key, const std::string& value);

// Copies every "model.*" entry into `config`. Unknown model keys are errors;
// non-model keys are errors unless allow_unknown.
void ApplyModelKeys(const KeyValues& kv, ModelConfig& config, bool allow_unknown);

}  // namespace envconv

#endif  // ENVCONV_KV_CONFIG_H_
