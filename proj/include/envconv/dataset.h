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

// Multi-environment corpus synthesis: parametric room impulse responses,
// convolution, and the 5x labeled manifest.

#ifndef ENVCONV_DATASET_H_
#define ENVCONV_DATASET_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "envconv/audio.h"
#include "envconv/common.h"

namespace envconv {

inline constexpr int kPreDelaySamples = 20;
inline constexpr double kOutputPeak = 0.95;
inline constexpr uint64_t kDefaultSplitSeed = 20220711;

struct RoomImpulseResponse {
  std::vector<double> taps;
  Environment environment = Environment::kBathroom;
  double rt60 = 0.0;
  int sample_rate = kSampleRate;

  size_t length() const { return taps.size(); }
};

// Preset decay time and direct-to-reverberant tail gain per environment.
struct RirPreset {
  double rt60;
  double tail_gain;
};

RirPreset DefaultRirPreset(Environment env);

// Exponentially decaying Gaussian noise tail behind a unit direct path:
//   taps[0] = 1, taps[n] = g * xi_n * exp(-6.9 n / (rt60 fs)) for n >= 20.
// xi_n is a standard normal draw clipped to +-3.5 so the direct path stays the
// global maximum. Taps stop at the RT60 point. Deterministic in all inputs.
RoomImpulseResponse SynthesizeRir(Environment env, double rt60, uint64_t seed);

// Same as above with an explicit tail gain.
RoomImpulseResponse SynthesizeRir(Environment env, double rt60, uint64_t seed,
                                  double tail_gain);

// Linear convolution truncated to the input length, without normalization.
std::vector<double> ConvolveTruncated(std::span<const double> signal,
                                      std::span<const double> taps);

// ConvolveTruncated followed by peak normalization to 0.95.
Waveform ApplyRir(const Waveform& wave, const RoomImpulseResponse& rir);

enum class Split { kTrain, kVal, kTest };

std::string_view SplitName(Split split);
Split ParseSplit(std::string_view name);

struct SplitRatios {
  double train = 0.98;
  double val = 0.01;
  double test = 0.01;
};

struct ManifestEntry {
  std::string clip_id;
  Environment environment = Environment::kClean;
  std::string audio_path;  // relative to the manifest's directory
  double duration_s = 0.0;
  Split split = Split::kTrain;
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> rejects;  // "<file>\t<reason>"

  std::map<Environment, int> CountsPerEnvironment() const;
};

// Tab-separated table with the header
//   clip_id  environment  audio_path  duration_s  split
void WriteManifest(const std::filesystem::path& path,
                   const CorpusManifest& manifest);
CorpusManifest ReadManifest(const std::filesystem::path& path);

struct CorpusOptions {
  SplitRatios ratios;
  uint64_t seed = kDefaultSplitSeed;
  // Clips whose mel would exceed this many frames are rejected.
  int max_frames = 1200;
};

// Splits `clip_ids` deterministically into train/val/test by shuffling with
// `seed`. Returns a map from clip id to split.
std::map<std::string, Split> AssignSplits(std::vector<std::string> clip_ids,
                                          const SplitRatios& ratios,
                                          uint64_t seed);

// Reads every .wav under `clean_dir`, writes clean and convolved variants to
// `out_dir/audio/<env>/<clip>.wav` (16-bit, 22050 Hz) and the manifest to
// `out_dir/manifest.tsv`. Rejected clips are logged, listed in the returned
// manifest and written to `out_dir/rejects.txt`.
CorpusManifest BuildCorpus(
    const std::filesystem::path& clean_dir, const std::filesystem::path& out_dir,
    const std::array<RoomImpulseResponse, 4>& rirs,
    const CorpusOptions& options);

}  // namespace envconv

#endif  // ENVCONV_DATASET_H_
