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

#include "envconv/dataset.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "envconv/dsp.h"
#include "envconv/features.h"

namespace envconv {
namespace {

namespace fs = std::filesystem;

constexpr double kNoiseClip = 3.5;
constexpr double kMaxTailGain = 0.28;
constexpr double kDecayNepers = 6.9;  // ln(1000): 60 dB of energy decay

// Box-Muller on raw engine output keeps draws identical across standard
// library implementations.
class GaussianSource {
 public:
  explicit GaussianSource(uint64_t seed) : engine_(seed) {}

  double Next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = Uniform();
    while (u1 <= 0.0) u1 = Uniform();
    const double u2 = Uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  double Uniform() { return (engine_() >> 11) * 0x1.0p-53; }

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::string Trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> SplitTabs(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, '\t')) fields.push_back(Trim(field));
  return fields;
}

}  // namespace

RirPreset DefaultRirPreset(Environment env) {
  switch (env) {
    case Environment::kBathroom:
      return {0.5, 0.25};
    case Environment::kClassroom:
      return {0.7, 0.12};
    case Environment::kGallery:
      return {1.5, 0.10};
    case Environment::kCave:
      return {2.5, 0.10};
    case Environment::kClean:
      break;
  }
  throw Error("the clean environment has no impulse response");
}

RoomImpulseResponse SynthesizeRir(Environment env, double rt60, uint64_t seed) {
  return SynthesizeRir(env, rt60, seed, DefaultRirPreset(env).tail_gain);
}

RoomImpulseResponse SynthesizeRir(Environment env, double rt60, uint64_t seed,
                                  double tail_gain) {
  if (env == Environment::kClean) {
    throw Error("synthesize_rir: the clean environment has no impulse response");
  }
  if (!(rt60 > 0.05 && rt60 <= 5.0)) {
    throw Error(fmt::format("synthesize_rir: rt60 {} outside (0.05, 5.0] s", rt60));
  }
  if (!(tail_gain > 0.0 && tail_gain <= kMaxTailGain)) {
    throw Error(fmt::format("synthesize_rir: tail gain {} outside (0, {}]",
                            tail_gain, kMaxTailGain));
  }
  const double decay_samples = rt60 * kSampleRate;
  const auto length =
      static_cast<size_t>(kPreDelaySamples + std::ceil(decay_samples));

  RoomImpulseResponse rir;
  rir.environment = env;
  rir.rt60 = rt60;
  rir.taps.assign(length, 0.0);
  rir.taps[0] = 1.0;
  GaussianSource noise(seed * 0x9E3779B97F4A7C15ULL +
                       static_cast<uint64_t>(EnvironmentIndex(env)));
  for (size_t n = kPreDelaySamples; n < length; ++n) {
    const double xi = std::clamp(noise.Next(), -kNoiseClip, kNoiseClip);
    rir.taps[n] = tail_gain * xi *
                  std::exp(-kDecayNepers * static_cast<double>(n) / decay_samples);
  }
  return rir;
}

std::vector<double> ConvolveTruncated(std::span<const double> signal,
                                      std::span<const double> taps) {
  std::vector<double> full = FftConvolve(signal, taps);
  full.resize(signal.size());
  return full;
}

Waveform ApplyRir(const Waveform& wave, const RoomImpulseResponse& rir) {
  if (wave.sample_rate != rir.sample_rate) {
    throw Error(fmt::format("apply_rir: sample-rate mismatch ({} vs {} Hz)",
                            wave.sample_rate, rir.sample_rate));
  }
  Waveform out;
  out.sample_rate = wave.sample_rate;
  out.samples = ConvolveTruncated(wave.samples, rir.taps);
  return PeakNormalize(std::move(out), kOutputPeak);
}

std::string_view SplitName(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "unknown";
}

Split ParseSplit(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw Error(fmt::format("unknown split '{}'", name));
}

std::map<Environment, int> CorpusManifest::CountsPerEnvironment() const {
  std::map<Environment, int> counts;
  for (Environment env : kAllEnvironments) counts[env] = 0;
  for (const ManifestEntry& e : entries) ++counts[e.environment];
  return counts;
}

void WriteManifest(const fs::path& path, const CorpusManifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write manifest {}", path.string()));
  out << "clip_id\tenvironment\taudio_path\tduration_s\tsplit\n";
  for (const ManifestEntry& e : manifest.entries) {
    out << fmt::format("{}\t{}\t{}\t{:.6f}\t{}\n", e.clip_id,
                       EnvironmentName(e.environment), e.audio_path,
                       e.duration_s, SplitName(e.split));
  }
  if (!out) throw Error(fmt::format("short write to {}", path.string()));
}

CorpusManifest ReadManifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("cannot read manifest {}", path.string()));
  std::string line;
  if (!std::getline(in, line) ||
      SplitTabs(line) != std::vector<std::string>{"clip_id", "environment",
                                                  "audio_path", "duration_s",
                                                  "split"}) {
    throw Error(fmt::format("{}: missing or malformed header", path.string()));
  }
  CorpusManifest manifest;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    const auto fields = SplitTabs(line);
    if (fields.size() != 5) {
      throw Error(fmt::format("{}:{}: expected 5 fields", path.string(), line_no));
    }
    ManifestEntry e;
    e.clip_id = fields[0];
    const auto env = ParseEnvironment(fields[1]);
    if (!env) {
      throw Error(fmt::format("{}:{}: unknown environment '{}'", path.string(),
                              line_no, fields[1]));
    }
    e.environment = *env;
    e.audio_path = fields[2];
    e.duration_s = std::stod(fields[3]);
    e.split = ParseSplit(fields[4]);
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

std::map<std::string, Split> AssignSplits(std::vector<std::string> clip_ids,
                                          const SplitRatios& ratios,
                                          uint64_t seed) {
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-6) {
    throw Error("split ratios must be non-negative and sum to 1");
  }
  std::sort(clip_ids.begin(), clip_ids.end());
  clip_ids.erase(std::unique(clip_ids.begin(), clip_ids.end()), clip_ids.end());
  std::mt19937_64 rng(seed);
  std::shuffle(clip_ids.begin(), clip_ids.end(), rng);
  const auto n = static_cast<long>(clip_ids.size());
  const long n_train = std::min<long>(n, std::lround(n * ratios.train));
  const long n_val = std::min<long>(n - n_train, std::lround(n * ratios.val));
  std::map<std::string, Split> splits;
  for (long i = 0; i < n; ++i) {
    Split s = i < n_train ? Split::kTrain
              : i < n_train + n_val ? Split::kVal
                                    : Split::kTest;
    splits[clip_ids[i]] = s;
  }
  return splits;
}

CorpusManifest BuildCorpus(const fs::path& clean_dir, const fs::path& out_dir,
                           const std::array<RoomImpulseResponse, 4>& rirs,
                           const CorpusOptions& options) {
  if (!fs::is_directory(clean_dir)) {
    throw Error(fmt::format("clean directory {} does not exist", clean_dir.string()));
  }
  std::vector<fs::path> files;
  for (const auto& item : fs::recursive_directory_iterator(clean_dir)) {
    if (!item.is_regular_file()) continue;
    std::string ext = item.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".wav") files.push_back(item.path());
  }
  std::sort(files.begin(), files.end());

  CorpusManifest manifest;
  struct Clip {
    std::string id;
    Waveform wave;
  };
  std::vector<Clip> clips;
  for (const fs::path& file : files) {
    const std::string id = file.stem().string();
    try {
      Waveform wave = ReadWav(file);
      if (wave.samples.empty()) throw Error("no samples");
      if (wave.sample_rate != kSampleRate) wave = Resample(wave, kSampleRate);
      const int frames = NumFrames(wave.samples.size(), kHopLength);
      if (frames > options.max_frames) {
        throw Error(fmt::format("{} frames exceeds the maximum of {}", frames,
                                options.max_frames));
      }
      if (std::any_of(clips.begin(), clips.end(),
                      [&](const Clip& c) { return c.id == id; })) {
        throw Error("duplicate clip id");
      }
      clips.push_back({id, std::move(wave)});
    } catch (const std::exception& e) {
      spdlog::warn("skipping {}: {}", file.string(), e.what());
      manifest.rejects.push_back(fmt::format("{}\t{}", file.string(), e.what()));
    }
  }
  if (clips.empty()) throw Error("empty corpus");
  for (const RoomImpulseResponse& rir : rirs) {
    if (rir.sample_rate != kSampleRate) throw Error("RIRs must be at 22050 Hz");
  }

  std::vector<std::string> ids;
  for (const Clip& c : clips) ids.push_back(c.id);
  const auto splits = AssignSplits(ids, options.ratios, options.seed);

  for (Environment env : kAllEnvironments) {
    fs::create_directories(out_dir / "audio" / std::string(EnvironmentName(env)));
  }
  for (const Clip& clip : clips) {
    for (Environment env : kAllEnvironments) {
      Waveform variant;
      if (env == Environment::kClean) {
        variant = clip.wave;
      } else {
        const auto it = std::find_if(rirs.begin(), rirs.end(), [&](const auto& r) {
          return r.environment == env;
        });
        if (it == rirs.end()) {
          throw Error(fmt::format("no impulse response for {}", EnvironmentName(env)));
        }
        variant = ApplyRir(clip.wave, *it);
      }
      const std::string rel =
          fmt::format("audio/{}/{}.wav", EnvironmentName(env), clip.id);
      WriteWav(out_dir / rel, variant);
      manifest.entries.push_back({clip.id, env, rel, variant.duration_seconds(),
                                  splits.at(clip.id)});
    }
  }
  WriteManifest(out_dir / "manifest.tsv", manifest);
  std::ofstream rejects(out_dir / "rejects.txt", std::ios::trunc);
  for (const std::string& r : manifest.rejects) rejects << r << '\n';
  spdlog::info("corpus: {} clips x {} environments = {} entries, {} rejected",
               clips.size(), kNumEnvironments, manifest.entries.size(),
               manifest.rejects.size());
  return manifest;
}

}  // namespace envconv
