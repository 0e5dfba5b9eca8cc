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

// Command-line entry point: make-dataset, extract-features, train, convert,
// evaluate, plot.
//
// Settings resolve as defaults < config file (--config) < command-line flags.
// Every setting has a config key; see DefaultRunConfig() for the full list.

#ifndef ENVCONV_CLI_H_
#define ENVCONV_CLI_H_

#include "envconv/kv_config.h"
#include "envconv/model.h"
#include "envconv/training.h"

namespace envconv {

// Every known key with its default value. "model.*" and "train.*" defaults are
// derived from ModelConfig and TrainConfig.
KeyValues DefaultRunConfig();

// Overlays `overrides` on `base`; unknown keys are errors.
KeyValues MergeRunConfig(const KeyValues& base, const KeyValues& overrides);

// model.preset (full, toy, micro) followed by the individual model keys.
ModelConfig ModelConfigFrom(const KeyValues& resolved);
TrainConfig TrainConfigFrom(const KeyValues& resolved);

// Returns the process exit code.
int RunCli(int argc, char** argv);

}  // namespace envconv

#endif  // ENVCONV_CLI_H_
