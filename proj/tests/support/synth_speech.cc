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

#include "support/synth_speech.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>
#include <unistd.h>

namespace envconv::testing {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double Formant(double hz, double center, double bandwidth) {
  const double d = (hz - center) / bandwidth;
  return std::exp(-0.5 * d * d);
}

}  // namespace

Waveform SynthesizeSpeech(uint64_t seed, const SynthOptions& o) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  const int fs = kSampleRate;
  const size_t n = static_cast<size_t>(std::lround(o.duration_s * fs));
  std::vector<double> x(n, 0.0);

  const double speaker_f0 = o.min_f0 + u(rng) * (o.max_f0 - o.min_f0);
  size_t pos = static_cast<size_t>(0.03 * fs);
  while (pos < n) {
    const double syllable = 0.10 + 0.10 * u(rng);
    const size_t len = std::min(n - pos, static_cast<size_t>(syllable * fs));
    if (u(rng) < 0.25) {
      // Fricative-like burst: differenced white noise.
      double prev = 0.0;
      const size_t burst = len / 2;
      for (size_t i = 0; i < burst; ++i) {
        const double w = noise(rng);
        const double env = std::sin(std::numbers::pi * i / burst);
        x[pos + i] += 0.08 * env * (w - prev);
        prev = w;
      }
    } else {
      const double f_start = speaker_f0 * (0.85 + 0.3 * u(rng));
      const double f_end = speaker_f0 * (0.85 + 0.3 * u(rng));
      const double f1 = 300.0 + 500.0 * u(rng);
      const double f2 = 900.0 + 1400.0 * u(rng);
      const double f3 = 2400.0 + 800.0 * u(rng);
      double phase = 0.0;
      for (size_t i = 0; i < len; ++i) {
        const double frac = static_cast<double>(i) / len;
        const double f0 = f_start + (f_end - f_start) * frac;
        phase += kTwoPi * f0 / fs;
        double s = 0.0;
        for (int h = 1; h * f0 < 5000.0; ++h) {
          const double hz = h * f0;
          const double a = Formant(hz, f1, 90.0) + 0.6 * Formant(hz, f2, 120.0) +
                           0.3 * Formant(hz, f3, 180.0) + 0.02;
          s += a * std::sin(h * phase);
        }
        const double env = 0.5 - 0.5 * std::cos(kTwoPi * frac);
        x[pos + i] += 0.1 * env * s;
      }
    }
    pos += len + static_cast<size_t>((0.02 + 0.06 * u(rng)) * fs);
  }
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    for (double& v : x) v *= o.peak / peak;
  }
  if (o.noise_floor > 0.0) {
    for (double& v : x) v += o.noise_floor * noise(rng);
  }
  return {std::move(x), fs};
}

Waveform Sine(double hz, double seconds, int sample_rate, double amplitude) {
  const size_t n = static_cast<size_t>(std::lround(seconds * sample_rate));
  std::vector<double> x(n);
  for (size_t i = 0; i < n; ++i) {
    x[i] = amplitude * std::sin(kTwoPi * hz * static_cast<double>(i) / sample_rate);
  }
  return {std::move(x), sample_rate};
}

std::vector<std::filesystem::path> WriteToyClips(const std::filesystem::path& dir,
                                                 int count, uint64_t seed,
                                                 const SynthOptions& options) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  for (int i = 0; i < count; ++i) {
    const auto path = dir / fmt::format("clip_{:02d}.wav", i);
    WriteWav(path, SynthesizeSpeech(seed * 1000 + i, options));
    paths.push_back(path);
  }
  return paths;
}

std::filesystem::path TempDir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() /
                   fmt::format("envconv_{}_{}", name, ::getpid());
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace envconv::testing
