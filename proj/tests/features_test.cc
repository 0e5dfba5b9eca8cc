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

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include <gtest/gtest.h>

#include "envconv/features.h"
#include "support/synth_speech.h"

namespace envconv {
namespace {

using testing::Sine;

// Naive DFT magnitude at an integer frequency in Hz over the whole signal.
double DftMagnitude(const std::vector<double>& x, double hz, int rate) {
  std::complex<double> acc = 0.0;
  for (size_t n = 0; n < x.size(); ++n) {
    acc += x[n] * std::polar(1.0, -2.0 * std::numbers::pi * hz * n / rate);
  }
  return std::abs(acc);
}

double SlaneyMel(double hz) {
  const double f_sp = 200.0 / 3.0;
  if (hz < 1000.0) return hz / f_sp;
  return 1000.0 / f_sp + std::log(hz / 1000.0) / (std::log(6.4) / 27.0);
}

double SlaneyHz(double mel) {
  const double f_sp = 200.0 / 3.0;
  if (mel < 1000.0 / f_sp) return mel * f_sp;
  return 1000.0 * std::exp((std::log(6.4) / 27.0) * (mel - 1000.0 / f_sp));
}

TEST(ResampleTest, IdentityAtSameRate) {
  const Waveform w = testing::SynthesizeSpeech(3, {1.0});
  const Waveform r = Resample(w, 22050);
  EXPECT_EQ(r.samples, w.samples);
  EXPECT_EQ(r.sample_rate, 22050);
}

TEST(ResampleTest, SinePeakSurvivesDownsampling) {
  const Waveform w = Sine(440.0, 1.0, 44100);
  const Waveform r = Resample(w, 22050);
  ASSERT_EQ(r.sample_rate, 22050);
  ASSERT_NEAR(static_cast<double>(r.samples.size()), 22050.0, 1.0);
  double best = 0.0;
  int best_hz = 0;
  for (int hz = 50; hz <= 2000; hz += 1) {
    const double m = DftMagnitude(r.samples, hz, 22050);
    if (m > best) {
      best = m;
      best_hz = hz;
    }
  }
  EXPECT_EQ(best_hz, 440);
}

TEST(ResampleTest, LengthFollowsRateRatio) {
  const Waveform w = Sine(300.0, 0.5, 16000);
  const Waveform r = Resample(w, 22050);
  EXPECT_NEAR(static_cast<double>(r.samples.size()), std::round(0.5 * 22050), 1.0);
}

TEST(ResampleTest, AntiAliasesAboveNewNyquist) {
  // 15 kHz at 44.1 kHz folds to 7.05 kHz without a low-pass.
  const Waveform r = Resample(Sine(15000.0, 0.5, 44100), 22050);
  double peak = 0.0;
  for (size_t i = 200; i + 200 < r.samples.size(); ++i) {
    peak = std::max(peak, std::abs(r.samples[i]));
  }
  EXPECT_LT(peak, 0.01);
}

TEST(ResampleTest, EmptyInputIsRejected) {
  EXPECT_THROW(Resample(Waveform{{}, 22050}, 16000), Error);
}

TEST(MelTest, OneSecondHasEightySevenFrames) {
  const MelSpectrogram m = ComputeMel(Sine(220.0, 1.0));
  EXPECT_EQ(m.frame_count, 87);
  EXPECT_EQ(m.rows(), 87);
  EXPECT_EQ(m.frames.cols(), 80);
  EXPECT_EQ(m.frame_count, static_cast<int>(std::ceil(22050.0 / 256.0)));
}

TEST(MelTest, SilenceSitsAtLogFloor) {
  const MelSpectrogram m = ComputeMel(Waveform{std::vector<double>(5000, 0.0), 22050});
  for (Eigen::Index i = 0; i < m.frames.size(); ++i) {
    EXPECT_DOUBLE_EQ(m.frames.data()[i], std::log(1e-5));
  }
}

TEST(MelTest, ToneLandsInNearestBand) {
  // Filter centers from the Slaney scale, independent of the implementation.
  const double top = SlaneyMel(8000.0);
  int expected = 0;
  double best = 1e9;
  for (int m = 0; m < 80; ++m) {
    const double center = SlaneyHz(top * (m + 1) / 81.0);
    if (std::abs(center - 1000.0) < best) {
      best = std::abs(center - 1000.0);
      expected = m;
    }
  }
  const MelSpectrogram mel = ComputeMel(Sine(1000.0, 1.0));
  for (int t = 3; t < mel.frame_count - 3; ++t) {
    Eigen::Index arg;
    mel.frames.row(t).maxCoeff(&arg);
    EXPECT_EQ(arg, expected) << "frame " << t;
  }
}

TEST(MelTest, WrongRateIsRejected) {
  EXPECT_THROW(ComputeMel(Sine(220.0, 0.2, 16000)), Error);
}

TEST(MelTest, DeterministicAndMonotoneInGain) {
  const Waveform w = testing::SynthesizeSpeech(5, {0.5, 100, 250, 0.4});
  const MelSpectrogram a = ComputeMel(w);
  const MelSpectrogram b = ComputeMel(w);
  EXPECT_EQ(a.frames, b.frames);
  Waveform louder = w;
  for (double& s : louder.samples) s *= 2.0;
  const MelSpectrogram c = ComputeMel(louder);
  const double floor = std::log(1e-5);
  for (Eigen::Index i = 0; i < a.frames.size(); ++i) {
    if (a.frames.data()[i] > floor) EXPECT_GE(c.frames.data()[i], a.frames.data()[i]);
  }
}

TEST(PitchTest, SineMedianNearTrueFrequency) {
  const std::vector<double> f0 = EstimatePitch(Sine(220.0, 1.0));
  std::vector<double> voiced;
  for (double f : f0) {
    if (f > 0.0) voiced.push_back(f);
  }
  ASSERT_GT(voiced.size(), 60u);
  std::nth_element(voiced.begin(), voiced.begin() + voiced.size() / 2, voiced.end());
  const double median = voiced[voiced.size() / 2];
  EXPECT_GE(median, 215.0);
  EXPECT_LE(median, 225.0);
}

TEST(PitchTest, SilenceIsUnvoiced) {
  const std::vector<double> f0 =
      EstimatePitch(Waveform{std::vector<double>(22050, 0.0), 22050});
  EXPECT_EQ(f0.size(), 87u);
  for (double f : f0) EXPECT_EQ(f, 0.0);
}

TEST(PitchTest, VoicingStopsAtSegmentBoundary) {
  Waveform w = Sine(220.0, 1.0);
  const size_t half = w.samples.size() / 2;
  std::fill(w.samples.begin() + half, w.samples.end(), 0.0);
  const std::vector<double> f0 = EstimatePitch(w);
  const int boundary = static_cast<int>(half / 256);
  for (int t = 0; t < static_cast<int>(f0.size()); ++t) {
    if (t < boundary - 2) EXPECT_GT(f0[t], 0.0) << t;
    if (t > boundary + 2) EXPECT_EQ(f0[t], 0.0) << t;
    if (f0[t] > 0.0) {
      EXPECT_GE(f0[t], 50.0);
      EXPECT_LE(f0[t], 800.0);
    }
  }
}

TEST(PitchTest, NoiseDoesNotCrash) {
  std::vector<double> x(11025);
  uint64_t s = 1;
  for (double& v : x) {
    s = s * 6364136223846793005ULL + 1442695040888963407ULL;
    v = static_cast<double>(s >> 11) * 0x1.0p-53 - 0.5;
  }
  const auto f0 = EstimatePitch(Waveform{x, 22050});
  EXPECT_EQ(f0.size(), static_cast<size_t>((11025 + 255) / 256));
}

TEST(EnergyTest, SilenceIsZero) {
  for (double e : ComputeEnergy(Waveform{std::vector<double>(4000, 0.0), 22050})) {
    EXPECT_EQ(e, 0.0);
  }
}

TEST(EnergyTest, PositivelyHomogeneous) {
  const Waveform w = testing::SynthesizeSpeech(9, {0.5, 100, 250, 0.4});
  Waveform w2 = w;
  for (double& s : w2.samples) s *= 2.0;
  const auto a = ComputeEnergy(w);
  const auto b = ComputeEnergy(w2);
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(b[i], 2.0 * a[i], 1e-6 * std::max(1.0, 2.0 * a[i]));
  }
}

TEST(EnergyTest, ImpulseMatchesDirectStft) {
  Waveform w{std::vector<double>(4096, 0.0), 22050};
  w.samples[0] = 1.0;
  const auto e = ComputeEnergy(w);
  ASSERT_EQ(e.size(), 16u);
  for (int t = 0; t < 16; ++t) {
    // Centered frame t starts at t*256 - 512; sample 0 sits at offset 512 - t*256.
    const int offset = 512 - t * 256;
    double expected = 0.0;
    if (offset >= 0 && offset < 1024) {
      const double win = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * offset / 1024);
      // |X_k| = win for every bin; sum over 513 bins.
      expected = std::sqrt(513.0) * win;
    }
    EXPECT_NEAR(e[t], expected, 1e-9) << "frame " << t;
  }
}

TEST(AlignmentTest, AllFeaturesShareFrameCount) {
  const Waveform w = testing::SynthesizeSpeech(4, {0.63});
  const int t = ComputeMel(w).frame_count;
  EXPECT_EQ(static_cast<int>(EstimatePitch(w).size()), t);
  EXPECT_EQ(static_cast<int>(ComputeEnergy(w).size()), t);
}

TEST(PadTest, PadsToMaxAndRoundTrips) {
  const Waveform w = Sine(300.0, 1.0);
  MelSpectrogram mel = ComputeMel(w);
  const Matrix original = mel.frames;
  ProsodyTrack p{EstimatePitch(w), ComputeEnergy(w)};
  PadToMax(mel, p);
  EXPECT_EQ(mel.rows(), 1200);
  EXPECT_EQ(mel.frame_count, 87);
  EXPECT_EQ(std::count(mel.pad_mask.begin(), mel.pad_mask.end(), true), 87);
  EXPECT_EQ(p.pitch.size(), 1200u);
  EXPECT_EQ(p.energy[500], 0.0);
  EXPECT_DOUBLE_EQ(mel.frames(1199, 5), std::log(1e-5));
  EXPECT_EQ(Unpad(mel).frames, original);
}

TEST(PadTest, FullLengthUnchangedAndOverlongRejected) {
  MelSpectrogram mel;
  mel.frames = Matrix::Constant(1200, 80, -1.0);
  mel.frame_count = 1200;
  mel.pad_mask.assign(1200, true);
  ProsodyTrack p{std::vector<double>(1200, 100.0), std::vector<double>(1200, 1.0)};
  PadToMax(mel, p);
  EXPECT_EQ(mel.frames, Matrix::Constant(1200, 80, -1.0));

  MelSpectrogram longer;
  longer.frames = Matrix::Zero(1201, 80);
  longer.frame_count = 1201;
  longer.pad_mask.assign(1201, true);
  ProsodyTrack q{std::vector<double>(1201, 0.0), std::vector<double>(1201, 0.0)};
  EXPECT_THROW(PadToMax(longer, q), Error);
}

}  // namespace
}  // namespace envconv
