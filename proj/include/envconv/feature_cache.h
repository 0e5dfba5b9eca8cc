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

// On-disk feature cache.
//
// Each clip variant is stored as one little-endian binary record (.feat):
//
//   char[8]  magic "ENVFEAT\0"
//   u32      format version (kFeatureFormatVersion)
//   u32      clip id length N, followed by N bytes of UTF-8 clip id
//   i32      environment index (0 clean, 1 bathroom, 2 cave, 3 classroom,
//            4 gallery)
//   u32      T, the original (unpadded) frame count
//   u32      mel channel count (80)
//   f32[T*80] log-mel, row-major (frame-major)
//   f32[T]   pitch in Hz (0 = unvoiced)
//   f32[T]   energy
//
// A human-readable index, features.tsv, lists every record with the header
//   clip_id  environment  split  frames  feature_path  audio_path

#ifndef ENVCONV_FEATURE_CACHE_H_
#define ENVCONV_FEATURE_CACHE_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "envconv/common.h"
#include "envconv/dataset.h"
#include "envconv/features.h"

namespace envconv {

inline constexpr uint32_t kFeatureFormatVersion = 1;

struct FeatureRecord {
  std::string clip_id;
  Environment environment = Environment::kClean;
  MelSpectrogram mel;  // unpadded
  ProsodyTrack prosody;
};

// Mel, pitch and energy for a 22050 Hz waveform.
FeatureRecord ExtractFeatures(const Waveform& wave, std::string clip_id,
                              Environment environment);

void WriteFeatureRecord(const std::filesystem::path& path,
                        const FeatureRecord& record);
FeatureRecord ReadFeatureRecord(const std::filesystem::path& path);

struct FeatureIndexEntry {
  std::string clip_id;
  Environment environment = Environment::kClean;
  Split split = Split::kTrain;
  int frames = 0;
  std::string feature_path;  // relative to the index directory
  std::string audio_path;    // as given in the corpus manifest
};

void WriteFeatureIndex(const std::filesystem::path& path,
                       const std::vector<FeatureIndexEntry>& entries);
std::vector<FeatureIndexEntry> ReadFeatureIndex(
    const std::filesystem::path& path);

// Computes features for every manifest entry and writes records plus
// `out_dir/features.tsv`. Audio paths resolve against the manifest directory.
std::vector<FeatureIndexEntry> BuildFeatureCache(
    const std::filesystem::path& manifest_path,
    const std::filesystem::path& out_dir);

// A loaded cache: index entries with their records, in index order.
struct FeatureSet {
  std::vector<FeatureIndexEntry> index;
  std::vector<FeatureRecord> records;
};

FeatureSet LoadFeatureSet(const std::filesystem::path& cache_dir);

// Extracts features for the manifest entries of one split (all splits when
// `split` is empty) without touching the disk cache.
FeatureSet ExtractFeatureSet(const std::filesystem::path& manifest_path,
                             std::optional<Split> split = std::nullopt);

}  // namespace envconv

#endif  // ENVCONV_FEATURE_CACHE_H_
