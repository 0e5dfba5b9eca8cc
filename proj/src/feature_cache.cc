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

#include "envconv/feature_cache.h"

#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace envconv {
namespace {

namespace fs = std::filesystem;

constexpr char kMagic[8] = {'E', 'N', 'V', 'F', 'E', 'A', 'T', '\0'};

template <typename T>
void Put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T Get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error("feature record truncated");
  return value;
}

std::vector<std::string> SplitTabs(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, '\t')) {
    if (!field.empty() && field.back() == '\r') field.pop_back();
    fields.push_back(field);
  }
  return fields;
}

}  // namespace

FeatureRecord ExtractFeatures(const Waveform& wave, std::string clip_id,
                              Environment environment) {
  FeatureRecord record;
  record.clip_id = std::move(clip_id);
  record.environment = environment;
  record.mel = ComputeMel(wave);
  record.prosody.pitch = EstimatePitch(wave);
  record.prosody.energy = ComputeEnergy(wave);
  return record;
}

void WriteFeatureRecord(const fs::path& path, const FeatureRecord& record) {
  const int t = record.mel.frame_count;
  if (record.mel.rows() != t || record.mel.frames.cols() != kNumMels ||
      static_cast<int>(record.prosody.pitch.size()) != t ||
      static_cast<int>(record.prosody.energy.size()) != t) {
    throw Error("feature record must be unpadded with aligned prosody");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  out.write(kMagic, sizeof(kMagic));
  Put<uint32_t>(out, kFeatureFormatVersion);
  Put<uint32_t>(out, static_cast<uint32_t>(record.clip_id.size()));
  out.write(record.clip_id.data(), static_cast<std::streamsize>(record.clip_id.size()));
  Put<int32_t>(out, EnvironmentIndex(record.environment));
  Put<uint32_t>(out, static_cast<uint32_t>(t));
  Put<uint32_t>(out, static_cast<uint32_t>(kNumMels));
  for (int r = 0; r < t; ++r) {
    for (int c = 0; c < kNumMels; ++c) {
      Put<float>(out, static_cast<float>(record.mel.frames(r, c)));
    }
  }
  for (double p : record.prosody.pitch) Put<float>(out, static_cast<float>(p));
  for (double e : record.prosody.energy) Put<float>(out, static_cast<float>(e));
  if (!out) throw Error(fmt::format("short write to {}", path.string()));
}

FeatureRecord ReadFeatureRecord(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot read {}", path.string()));
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(fmt::format("{}: not a feature record", path.string()));
  }
  const auto version = Get<uint32_t>(in);
  if (version != kFeatureFormatVersion) {
    throw Error(fmt::format("{}: unsupported feature format version {}",
                            path.string(), version));
  }
  FeatureRecord record;
  const auto id_len = Get<uint32_t>(in);
  record.clip_id.resize(id_len);
  in.read(record.clip_id.data(), id_len);
  record.environment = EnvironmentFromIndex(Get<int32_t>(in));
  const auto t = static_cast<int>(Get<uint32_t>(in));
  const auto mels = static_cast<int>(Get<uint32_t>(in));
  if (mels != kNumMels) {
    throw Error(fmt::format("{}: expected {} mel channels, found {}",
                            path.string(), kNumMels, mels));
  }
  record.mel.frames.resize(t, kNumMels);
  for (int r = 0; r < t; ++r) {
    for (int c = 0; c < kNumMels; ++c) record.mel.frames(r, c) = Get<float>(in);
  }
  record.mel.frame_count = t;
  record.mel.pad_mask.assign(t, true);
  record.prosody.pitch.resize(t);
  record.prosody.energy.resize(t);
  for (int i = 0; i < t; ++i) record.prosody.pitch[i] = Get<float>(in);
  for (int i = 0; i < t; ++i) record.prosody.energy[i] = Get<float>(in);
  return record;
}

void WriteFeatureIndex(const fs::path& path,
                       const std::vector<FeatureIndexEntry>& entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  out << "clip_id\tenvironment\tsplit\tframes\tfeature_path\taudio_path\n";
  for (const auto& e : entries) {
    out << fmt::format("{}\t{}\t{}\t{}\t{}\t{}\n", e.clip_id,
                       EnvironmentName(e.environment), SplitName(e.split),
                       e.frames, e.feature_path, e.audio_path);
  }
  if (!out) throw Error(fmt::format("short write to {}", path.string()));
}

std::vector<FeatureIndexEntry> ReadFeatureIndex(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("cannot read {}", path.string()));
  std::string line;
  std::getline(in, line);
  if (SplitTabs(line).size() != 6 || SplitTabs(line)[0] != "clip_id") {
    throw Error(fmt::format("{}: malformed header", path.string()));
  }
  std::vector<FeatureIndexEntry> entries;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = SplitTabs(line);
    if (f.size() != 6) throw Error(fmt::format("{}: malformed row", path.string()));
    const auto env = ParseEnvironment(f[1]);
    if (!env) throw Error(fmt::format("{}: unknown environment {}", path.string(), f[1]));
    entries.push_back({f[0], *env, ParseSplit(f[2]), std::stoi(f[3]), f[4], f[5]});
  }
  return entries;
}

std::vector<FeatureIndexEntry> BuildFeatureCache(const fs::path& manifest_path,
                                                 const fs::path& out_dir) {
  const CorpusManifest manifest = ReadManifest(manifest_path);
  if (manifest.entries.empty()) throw Error("manifest has no entries");
  const fs::path base = manifest_path.parent_path();
  fs::create_directories(out_dir / "records");
  std::vector<FeatureIndexEntry> index;
  for (const ManifestEntry& e : manifest.entries) {
    Waveform wave = ReadWav(base / e.audio_path);
    if (wave.sample_rate != kSampleRate) wave = Resample(wave, kSampleRate);
    const FeatureRecord record = ExtractFeatures(wave, e.clip_id, e.environment);
    const std::string rel =
        fmt::format("records/{}__{}.feat", e.clip_id, EnvironmentName(e.environment));
    WriteFeatureRecord(out_dir / rel, record);
    index.push_back({e.clip_id, e.environment, e.split, record.mel.frame_count,
                     rel, (base / e.audio_path).string()});
  }
  WriteFeatureIndex(out_dir / "features.tsv", index);
  spdlog::info("feature cache: {} records written to {}", index.size(),
               out_dir.string());
  return index;
}

FeatureSet LoadFeatureSet(const fs::path& cache_dir) {
  FeatureSet set;
  set.index = ReadFeatureIndex(cache_dir / "features.tsv");
  set.records.reserve(set.index.size());
  for (const auto& e : set.index) {
    set.records.push_back(ReadFeatureRecord(cache_dir / e.feature_path));
  }
  return set;
}

FeatureSet ExtractFeatureSet(const fs::path& manifest_path, std::optional<Split> split) {
  const CorpusManifest manifest = ReadManifest(manifest_path);
  const fs::path base = manifest_path.parent_path();
  FeatureSet set;
  for (const ManifestEntry& e : manifest.entries) {
    if (split && e.split != *split) continue;
    Waveform wave = ReadWav(base / e.audio_path);
    if (wave.sample_rate != kSampleRate) wave = Resample(wave, kSampleRate);
    FeatureRecord record = ExtractFeatures(wave, e.clip_id, e.environment);
    set.index.push_back({e.clip_id, e.environment, e.split, record.mel.frame_count,
                         "", (base / e.audio_path).string()});
    set.records.push_back(std::move(record));
  }
  return set;
}

}  // namespace envconv
