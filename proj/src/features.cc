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

#include "envconv/features.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

namespace envconv {
namespace {

// Half-width of the resampling kernel in zero crossings of the lower rate.
constexpr int kResampleZeroCrossings = 32;
constexpr double kKaiserBeta = 8.6;

void RequireRate(const Waveform& wave, const char* what) {
  if (wave.sample_rate != kSampleRate) {
    throw Error(fmt::format("{}: expected {} Hz input, got {} Hz", what,
                            kSampleRate, wave.sample_rate));
  }
}

double Sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

Matrix Magnitude(const ComplexMatrix& spec) { return spec.cwiseAbs(); }

}  // namespace

double LogMelFloor() { return std::log(kLogFloor); }

Waveform Resample(const Waveform& wave, int target_rate) {
  if (wave.samples.empty()) throw Error("resample: empty waveform");
  if (target_rate <= 0 || wave.sample_rate <= 0) {
    throw Error("resample: sample rates must be positive");
  }
  if (target_rate == wave.sample_rate) return wave;

  const long src_rate = wave.sample_rate;
  const long in_len = static_cast<long>(wave.samples.size());
  const long out_len = (in_len * target_rate + src_rate / 2) / src_rate;
  // Cutoff relative to the input Nyquist frequency.
  const double cutoff =
      std::min(1.0, static_cast<double>(target_rate) / src_rate);
  const double half_width = kResampleZeroCrossings / cutoff;
  // Kaiser window sampled on |r| in [0, 1], linearly interpolated below.
  constexpr int kTable = 4096;
  std::vector<double> kaiser(kTable + 2);
  const double i0_beta = std::cyl_bessel_i(0.0, kKaiserBeta);
  for (int i = 0; i <= kTable + 1; ++i) {
    const double r = std::min(1.0, static_cast<double>(i) / kTable);
    kaiser[i] = std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - r * r)) /
                i0_beta;
  }

  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(std::max<long>(out_len, 1));
  const double step = static_cast<double>(src_rate) / target_rate;
  for (long j = 0; j < static_cast<long>(out.samples.size()); ++j) {
    const double t = j * step;
    const long lo = std::max<long>(0, static_cast<long>(std::ceil(t - half_width)));
    const long hi =
        std::min<long>(in_len - 1, static_cast<long>(std::floor(t + half_width)));
    double acc = 0.0;
    for (long n = lo; n <= hi; ++n) {
      const double d = t - n;
      const double pos = std::abs(d) / half_width * kTable;
      const int idx = std::min(static_cast<int>(pos), kTable);
      const double frac = pos - idx;
      const double win = kaiser[idx] + frac * (kaiser[idx + 1] - kaiser[idx]);
      acc += wave.samples[n] * cutoff * Sinc(cutoff * d) * win;
    }
    out.samples[j] = acc;
  }
  return out;
}

const Matrix& DefaultMelFilterbank() {
  static const Matrix fb =
      MelFilterbank(kSampleRate, kFftSize, kNumMels, kMelFmin, kMelFmax);
  return fb;
}

Matrix LogMelFromMagnitude(const Matrix& magnitude) {
  Matrix mel = magnitude * DefaultMelFilterbank().transpose();
  return mel.array().max(kLogFloor).log().matrix();
}

MelSpectrogram ComputeMel(const Waveform& wave) {
  RequireRate(wave, "compute_mel");
  const ComplexMatrix spec = Stft(wave.samples, DefaultStftConfig());
  MelSpectrogram mel;
  mel.frames = LogMelFromMagnitude(Magnitude(spec));
  mel.frame_count = static_cast<int>(mel.frames.rows());
  mel.pad_mask.assign(mel.frame_count, true);
  return mel;
}

std::vector<double> ComputeEnergy(const Waveform& wave) {
  RequireRate(wave, "compute_energy");
  const ComplexMatrix spec = Stft(wave.samples, DefaultStftConfig());
  std::vector<double> energy(spec.rows());
  for (int t = 0; t < spec.rows(); ++t) {
    energy[t] = spec.row(t).cwiseAbs().norm();
  }
  return energy;
}

std::vector<double> EstimatePitch(const Waveform& wave) {
  RequireRate(wave, "estimate_pitch");
  const int frames = NumFrames(wave.samples.size(), kHopLength);
  const int min_lag = static_cast<int>(std::floor(kSampleRate / kMaxF0));
  const int max_lag = static_cast<int>(std::ceil(kSampleRate / kMinF0));
  const int window = kWinLength;
  const int span = window - max_lag - 1;
  const auto len = static_cast<long>(wave.samples.size());

  std::vector<double> pitch(frames, 0.0);
  std::vector<double> seg(window);
  std::vector<double> nccf(max_lag + 2, 0.0);
  for (int t = 0; t < frames; ++t) {
    const long start = static_cast<long>(t) * kHopLength - window / 2;
    for (int n = 0; n < window; ++n) {
      const long idx = start + n;
      seg[n] = (idx >= 0 && idx < len) ? wave.samples[idx] : 0.0;
    }
    double e0 = 0.0;
    for (int n = 0; n < span; ++n) e0 += seg[n] * seg[n];
    // Near-digital-silence gate.
    if (e0 < 1e-8 * span) continue;

    // Sliding energy of the lagged segment.
    double e_lag = 0.0;
    for (int n = min_lag - 1; n < min_lag - 1 + span; ++n) e_lag += seg[n] * seg[n];
    double best = 0.0;
    for (int lag = min_lag - 1; lag <= max_lag + 1; ++lag) {
      if (lag > min_lag - 1) {
        const double out = seg[lag - 1];
        const double in = seg[lag - 1 + span];
        e_lag += in * in - out * out;
      }
      double cross = 0.0;
      for (int n = 0; n < span; ++n) cross += seg[n] * seg[n + lag];
      const double denom = std::sqrt(e0 * std::max(e_lag, 0.0));
      nccf[lag] = denom > 1e-12 ? cross / denom : 0.0;
      if (lag >= min_lag && lag <= max_lag) best = std::max(best, nccf[lag]);
    }
    if (best < kVoicingThreshold) continue;

    // Smallest-lag local peak close to the global maximum avoids picking
    // period multiples.
    int chosen = -1;
    for (int lag = min_lag; lag <= max_lag; ++lag) {
      if (nccf[lag] >= 0.9 * best && nccf[lag] >= nccf[lag - 1] &&
          nccf[lag] >= nccf[lag + 1]) {
        chosen = lag;
        break;
      }
    }
    if (chosen < 0) continue;
    const double a = nccf[chosen - 1], b = nccf[chosen], c = nccf[chosen + 1];
    const double curvature = a - 2.0 * b + c;
    double offset = 0.0;
    if (std::abs(curvature) > 1e-12) {
      offset = std::clamp(0.5 * (a - c) / curvature, -0.5, 0.5);
    }
    const double f0 = kSampleRate / (chosen + offset);
    pitch[t] = std::clamp(f0, kMinF0, kMaxF0);
  }
  return pitch;
}

void PadToMax(MelSpectrogram& mel, ProsodyTrack& prosody, int max_frames) {
  const int t = mel.frame_count;
  if (t > max_frames) {
    throw Error(fmt::format(
        "pad_to_max: {} frames exceeds the maximum of {}; truncate or reject "
        "the clip",
        t, max_frames));
  }
  if (mel.rows() != t || static_cast<int>(prosody.pitch.size()) != t ||
      static_cast<int>(prosody.energy.size()) != t) {
    throw Error("pad_to_max: mel and prosody must be unpadded and aligned");
  }
  Matrix padded = Matrix::Constant(max_frames, mel.frames.cols(), LogMelFloor());
  padded.topRows(t) = mel.frames;
  mel.frames = std::move(padded);
  mel.pad_mask.assign(max_frames, false);
  std::fill(mel.pad_mask.begin(), mel.pad_mask.begin() + t, true);
  prosody.pitch.resize(max_frames, 0.0);
  prosody.energy.resize(max_frames, 0.0);
}

MelSpectrogram Unpad(const MelSpectrogram& mel) {
  MelSpectrogram out;
  out.frames.resize(mel.frame_count, mel.frames.cols());
  int row = 0;
  for (int t = 0; t < mel.rows() && row < mel.frame_count; ++t) {
    if (t < static_cast<int>(mel.pad_mask.size()) && !mel.pad_mask[t]) continue;
    out.frames.row(row++) = mel.frames.row(t);
  }
  if (row != mel.frame_count) throw Error("unpad: pad_mask disagrees with frame_count");
  out.frame_count = mel.frame_count;
  out.pad_mask.assign(mel.frame_count, true);
  return out;
}

}  // namespace envconv
