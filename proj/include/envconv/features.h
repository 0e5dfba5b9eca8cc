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

// Audio front-end: resampling, log-mel extraction, F0 and energy contours,
// and fixed-length padding. Every function here is pure.

#ifndef ENVCONV_FEATURES_H_
#define ENVCONV_FEATURES_H_

#include <vector>

#include "envconv/audio.h"
#include "envconv/common.h"
#include "envconv/dsp.h"

namespace envconv {

inline constexpr int kFftSize = 1024;
inline constexpr int kWinLength = 1024;
inline constexpr int kHopLength = 256;
inline constexpr int kNumMels = 80;
inline constexpr double kMelFmin = 0.0;
inline constexpr double kMelFmax = 8000.0;
inline constexpr double kLogFloor = 1e-5;
inline constexpr int kMaxFrames = 1200;
inline constexpr double kMinF0 = 50.0;
inline constexpr double kMaxF0 = 800.0;
inline constexpr double kVoicingThreshold = 0.3;

inline StftConfig DefaultStftConfig() {
  return {kFftSize, kWinLength, kHopLength};
}

// log(kLogFloor), the value of silent or padded mel cells.
double LogMelFloor();

// frames: rows x 80 log-mel. Unpadded spectrograms have rows == frame_count;
// padded ones have rows == the padded length and pad_mask marks real frames.
struct MelSpectrogram {
  Matrix frames;
  int frame_count = 0;
  std::vector<bool> pad_mask;

  int rows() const { return static_cast<int>(frames.rows()); }
  bool padded() const { return rows() != frame_count; }
};

struct ProsodyTrack {
  std::vector<double> pitch;   // Hz, 0 for unvoiced frames
  std::vector<double> energy;  // L2 norm of the STFT magnitude frame
};

// Band-limited (Kaiser-windowed sinc) resampling. Output length is
// round(len * target_rate / wave.sample_rate).
Waveform Resample(const Waveform& wave, int target_rate);

// Shared front-end filterbank (80 x 513).
const Matrix& DefaultMelFilterbank();

// Log-mel spectrogram of a 22050 Hz waveform, T = ceil(len / 256).
MelSpectrogram ComputeMel(const Waveform& wave);

// Log-mel from a precomputed STFT magnitude (T x 513).
Matrix LogMelFromMagnitude(const Matrix& magnitude);

// Normalized-autocorrelation F0 per mel frame; 0 marks unvoiced frames.
std::vector<double> EstimatePitch(const Waveform& wave);

// Per-frame L2 norm of the STFT magnitude, aligned with ComputeMel.
std::vector<double> ComputeEnergy(const Waveform& wave);

// Pads mel (log floor) and prosody (zeros) to `max_frames`. Throws if the
// input has more than `max_frames` frames; callers must truncate or reject.
void PadToMax(MelSpectrogram& mel, ProsodyTrack& prosody,
              int max_frames = kMaxFrames);

// Inverse of PadToMax on the mel: keeps only the frames marked in pad_mask.
MelSpectrogram Unpad(const MelSpectrogram& mel);

}  // namespace envconv

#endif  // ENVCONV_FEATURES_H_
