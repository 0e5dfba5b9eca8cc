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

#include "envconv/common.h"

#include <algorithm>
#include <cctype>

#include <fmt/format.h>

namespace envconv {

std::string_view EnvironmentName(Environment env) {
  switch (env) {
    case Environment::kClean:
      return "clean";
    case Environment::kBathroom:
      return "bathroom";
    case Environment::kCave:
      return "cave";
    case Environment::kClassroom:
      return "classroom";
    case Environment::kGallery:
      return "gallery";
  }
  return "unknown";
}

std::optional<Environment> ParseEnvironment(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  for (Environment env : kAllEnvironments) {
    if (EnvironmentName(env) == lower) return env;
  }
  return std::nullopt;
}

Environment EnvironmentFromIndex(int index) {
  if (index < 0 || index >= kNumEnvironments) {
    throw Error(fmt::format("environment index {} out of range", index));
  }
  return static_cast<Environment>(index);
}

}  // namespace envconv
