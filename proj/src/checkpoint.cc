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

#include "envconv/checkpoint.h"

#include <cstring>
#include <fstream>
#include <set>

#include <fmt/format.h>

namespace envconv {
namespace {

namespace fs = std::filesystem;

constexpr char kMagic[8] = {'E', 'N', 'V', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void Put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

void PutString(std::ostream& out, const std::string& s) {
  Put<uint32_t>(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void PutMatrix(std::ostream& out, const Matrix& m) {
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
}

template <typename T>
T Get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error("checkpoint truncated");
  return value;
}

std::string GetString(std::istream& in) {
  const auto n = Get<uint32_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw Error("checkpoint truncated");
  return s;
}

void GetMatrix(std::istream& in, Matrix& m, int rows, int cols) {
  m.resize(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!in) throw Error("checkpoint truncated");
}

}  // namespace

void SaveCheckpoint(const fs::path& path, const EffectConversionModel& model,
                    const CheckpointMeta& meta) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write checkpoint {}", tmp.string()));
    const std::string config = model.config().Serialize();
    out.write(kMagic, sizeof(kMagic));
    Put<uint32_t>(out, kCheckpointVersion);
    PutString(out, config);
    Put<uint64_t>(out, Fnv1a64(config));
    PutString(out, model.stats().Serialize());
    PutString(out, meta.train_config);
    PutString(out, meta.rng_state);
    Put<int64_t>(out, meta.step);
    const auto& params = model.params().all();
    Put<uint32_t>(out, static_cast<uint32_t>(params.size()));
    for (const auto& p : params) {
      PutString(out, p->name);
      Put<uint8_t>(out, p->trainable ? 1 : 0);
      Put<int64_t>(out, p->adam_steps);
      Put<uint32_t>(out, static_cast<uint32_t>(p->value.rows()));
      Put<uint32_t>(out, static_cast<uint32_t>(p->value.cols()));
      PutMatrix(out, p->value);
      PutMatrix(out, p->m);
      PutMatrix(out, p->v);
    }
    out.flush();
    if (!out) throw Error(fmt::format("short write to {}", tmp.string()));
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    throw Error(fmt::format("cannot move checkpoint into {}: {}", path.string(),
                            ec.message()));
  }
}

LoadedCheckpoint LoadCheckpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot read checkpoint {}", path.string()));
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(fmt::format("{}: not a checkpoint", path.string()));
  }
  const auto version = Get<uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw Error(fmt::format("{}: unsupported checkpoint version {}", path.string(),
                            version));
  }
  const std::string config_text = GetString(in);
  const auto hash = Get<uint64_t>(in);
  if (hash != Fnv1a64(config_text)) {
    throw Error(fmt::format("{}: config hash mismatch", path.string()));
  }
  LoadedCheckpoint loaded;
  loaded.model =
      std::make_unique<EffectConversionModel>(ModelConfig::Deserialize(config_text));
  loaded.model->stats() = VarianceStats::Deserialize(GetString(in));
  loaded.meta.train_config = GetString(in);
  loaded.meta.rng_state = GetString(in);
  loaded.meta.step = Get<int64_t>(in);

  auto& store = loaded.model->params();
  const auto count = Get<uint32_t>(in);
  if (count != store.all().size()) {
    throw Error(fmt::format("{}: {} tensors stored, graph has {}", path.string(), count,
                            store.all().size()));
  }
  std::set<std::string> seen;
  for (uint32_t i = 0; i < count; ++i) {
    const std::string name = GetString(in);
    if (!store.Contains(name) || !seen.insert(name).second) {
      throw Error(fmt::format("{}: unexpected tensor {}", path.string(), name));
    }
    nn::Parameter& p = store.Get(name);
    p.trainable = Get<uint8_t>(in) != 0;
    p.adam_steps = Get<int64_t>(in);
    const int rows = static_cast<int>(Get<uint32_t>(in));
    const int cols = static_cast<int>(Get<uint32_t>(in));
    if (rows != p.value.rows() || cols != p.value.cols()) {
      throw Error(fmt::format("{}: tensor {} is {}x{}, expected {}x{}", path.string(),
                              name, rows, cols, p.value.rows(), p.value.cols()));
    }
    GetMatrix(in, p.value, rows, cols);
    GetMatrix(in, p.m, rows, cols);
    GetMatrix(in, p.v, rows, cols);
    p.ZeroGrad();
  }
  return loaded;
}

}  // namespace envconv
