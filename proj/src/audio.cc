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

#include "envconv/audio.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include <fmt/format.h>

#include "envconv/common.h"

namespace envconv {
namespace {

static_assert(std::endian::native == std::endian::little,
              "WAV I/O assumes a little-endian host");

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T ReadLe(const uint8_t* p) {
  T value;
  std::memcpy(&value, p, sizeof(T));
  return value;
}

template <typename T>
void AppendLe(std::string& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.append(bytes, sizeof(T));
}

double DecodeSample(const uint8_t* p, uint16_t format, uint16_t bits) {
  if (format == kFormatFloat) {
    if (bits == 32) return ReadLe<float>(p);
    if (bits == 64) return ReadLe<double>(p);
  } else {
    switch (bits) {
      case 8:
        return (static_cast<int>(p[0]) - 128) / 128.0;
      case 16:
        return ReadLe<int16_t>(p) / 32768.0;
      case 24: {
        int32_t v = (static_cast<int32_t>(p[2]) << 24) |
                    (static_cast<int32_t>(p[1]) << 16) |
                    (static_cast<int32_t>(p[0]) << 8);
        return (v >> 8) / 8388608.0;
      }
      case 32:
        return ReadLe<int32_t>(p) / 2147483648.0;
    }
  }
  throw Error(fmt::format("unsupported WAV sample format {} / {} bits", format,
                          bits));
}

}  // namespace

Waveform ReadWav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open {}", path.string()));
  std::vector<uint8_t> data((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
  if (data.size() < 12 || std::memcmp(data.data(), "RIFF", 4) != 0 ||
      std::memcmp(data.data() + 8, "WAVE", 4) != 0) {
    throw Error(fmt::format("{} is not a RIFF/WAVE file", path.string()));
  }

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const uint8_t* pcm = nullptr;
  size_t pcm_bytes = 0;
  size_t pos = 12;
  while (pos + 8 <= data.size()) {
    const uint8_t* chunk = data.data() + pos;
    uint32_t size = ReadLe<uint32_t>(chunk + 4);
    size_t body = pos + 8;
    size_t available = data.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || available < 16) {
        throw Error(fmt::format("{}: truncated fmt chunk", path.string()));
      }
      format = ReadLe<uint16_t>(chunk + 8);
      channels = ReadLe<uint16_t>(chunk + 10);
      rate = ReadLe<uint32_t>(chunk + 12);
      bits = ReadLe<uint16_t>(chunk + 22);
      if (format == kFormatExtensible && size >= 40 && available >= 40) {
        format = ReadLe<uint16_t>(chunk + 32);
      }
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      pcm = chunk + 8;
      pcm_bytes = std::min<size_t>(size, available);
    }
    pos = body + size + (size & 1);
  }
  if (pcm == nullptr || channels == 0 || rate == 0 || bits == 0) {
    throw Error(fmt::format("{}: missing fmt or data chunk", path.string()));
  }
  if (format != kFormatPcm && format != kFormatFloat) {
    throw Error(fmt::format("{}: unsupported WAV format tag {}", path.string(), format));
  }

  const size_t frame_bytes = static_cast<size_t>(channels) * (bits / 8);
  const size_t frames = pcm_bytes / frame_bytes;
  Waveform wave;
  wave.sample_rate = static_cast<int>(rate);
  wave.samples.resize(frames);
  for (size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (uint16_t c = 0; c < channels; ++c) {
      acc += DecodeSample(pcm + i * frame_bytes + c * (bits / 8), format, bits);
    }
    wave.samples[i] = acc / channels;
  }
  return wave;
}

void WriteWav(const std::filesystem::path& path, const Waveform& wave) {
  if (wave.sample_rate <= 0) throw Error("WriteWav: invalid sample rate");
  const uint32_t data_bytes = static_cast<uint32_t>(wave.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out.append("RIFF");
  AppendLe<uint32_t>(out, 36 + data_bytes);
  out.append("WAVE");
  out.append("fmt ");
  AppendLe<uint32_t>(out, 16);
  AppendLe<uint16_t>(out, kFormatPcm);
  AppendLe<uint16_t>(out, 1);
  AppendLe<uint32_t>(out, static_cast<uint32_t>(wave.sample_rate));
  AppendLe<uint32_t>(out, static_cast<uint32_t>(wave.sample_rate) * 2);
  AppendLe<uint16_t>(out, 2);
  AppendLe<uint16_t>(out, 16);
  out.append("data");
  AppendLe<uint32_t>(out, data_bytes);
  for (double s : wave.samples) {
    double clipped = std::clamp(s, -1.0, 1.0);
    auto q = static_cast<int16_t>(std::lround(clipped * 32767.0));
    AppendLe<int16_t>(out, q);
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error(fmt::format("cannot write {}", path.string()));
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw Error(fmt::format("short write to {}", path.string()));
}

Waveform PeakNormalize(Waveform wave, double peak) {
  double max_abs = 0.0;
  for (double s : wave.samples) max_abs = std::max(max_abs, std::abs(s));
  if (max_abs > 0.0) {
    const double gain = peak / max_abs;
    for (double& s : wave.samples) s *= gain;
  }
  return wave;
}

}  // namespace envconv
