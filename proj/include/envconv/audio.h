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

#ifndef ENVCONV_AUDIO_H_
#define ENVCONV_AUDIO_H_

#include <filesystem>
#include <vector>

namespace envconv {

inline constexpr int kSampleRate = 22050;

// Mono audio. Amplitudes are nominally in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate
                           : 0.0;
  }
};

// Reads RIFF/WAVE with 16/24/32-bit PCM or 32-bit float samples. Multichannel
// input is averaged down to mono. Throws envconv::Error on malformed files.
Waveform ReadWav(const std::filesystem::path& path);

// Writes 16-bit PCM mono; samples are clipped to [-1, 1].
void WriteWav(const std::filesystem::path& path, const Waveform& wave);

// Scales so that max |sample| equals `peak`. All-zero input is returned as is.
Waveform PeakNormalize(Waveform wave, double peak);

}  // namespace envconv

#endif  // ENVCONV_AUDIO_H_
