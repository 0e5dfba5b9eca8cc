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

#ifndef ENVCONV_COMMON_H_
#define ENVCONV_COMMON_H_

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace envconv {

// Dense row-major matrix; rows are time frames throughout the project.
using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Acoustic environment classes. Clean is the un-convolved original.
enum class Environment : int {
  kClean = 0,
  kBathroom = 1,
  kCave = 2,
  kClassroom = 3,
  kGallery = 4,
};

inline constexpr int kNumEnvironments = 5;

inline constexpr std::array<Environment, kNumEnvironments> kAllEnvironments = {
    Environment::kClean, Environment::kBathroom, Environment::kCave,
    Environment::kClassroom, Environment::kGallery};

inline constexpr std::array<Environment, 4> kReverberantEnvironments = {
    Environment::kBathroom, Environment::kCave, Environment::kClassroom,
    Environment::kGallery};

std::string_view EnvironmentName(Environment env);

// Case-insensitive; returns nullopt for unknown names.
std::optional<Environment> ParseEnvironment(std::string_view name);

inline int EnvironmentIndex(Environment env) { return static_cast<int>(env); }

Environment EnvironmentFromIndex(int index);

}  // namespace envconv

#endif  // ENVCONV_COMMON_H_
