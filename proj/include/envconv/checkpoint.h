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

// Versioned binary checkpoint.
//
//   magic "ENVCKPT\0", u32 version
//   str model_config, u64 fnv1a64(model_config)
//   str stats, str train_config, str rng_state
//   i64 step, u32 tensor_count
//   per tensor: str name, u8 trainable, i64 adam_steps, u32 rows, u32 cols,
//               f64[rows*cols] value, m, v (row-major)
//
// Strings are u32 length + bytes; integers little-endian. Files are written to
// a temporary sibling and renamed into place.

#ifndef ENVCONV_CHECKPOINT_H_
#define ENVCONV_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "envconv/model.h"

namespace envconv {

inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  int64_t step = 0;
  std::string train_config;  // free-form key=value text
  std::string rng_state;     // serialized generator state, may be empty
};

void SaveCheckpoint(const std::filesystem::path& path,
                    const EffectConversionModel& model, const CheckpointMeta& meta);

struct LoadedCheckpoint {
  std::unique_ptr<EffectConversionModel> model;
  CheckpointMeta meta;
};

// Rebuilds the model from the stored configuration. Throws on a bad magic,
// version, config hash, or a tensor set that does not match the graph.
LoadedCheckpoint LoadCheckpoint(const std::filesystem::path& path);

}  // namespace envconv

#endif  // ENVCONV_CHECKPOINT_H_
