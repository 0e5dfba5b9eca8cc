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

#include "envconv/dsp.h"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

#include <fftw3.h>
#include <fmt/format.h>

namespace envconv {
namespace {

// FFTW's planner is not thread-safe; execution on distinct buffers is.
std::mutex& PlannerMutex() {
  static std::mutex mutex;
  return mutex;
}

// Owns one real<->complex plan pair and its aligned buffers.
class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    real_ = fftw_alloc_real(n);
    complex_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard<std::mutex> lock(PlannerMutex());
    forward_ = fftw_plan_dft_r2c_1d(n, real_, complex_, FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_1d(n, complex_, real_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard<std::mutex> lock(PlannerMutex());
      fftw_destroy_plan(forward_);
      fftw_destroy_plan(inverse_);
    }
    fftw_free(real_);
    fftw_free(complex_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* real() { return real_; }
  std::complex<double>* spectrum() {
    return reinterpret_cast<std::complex<double>*>(complex_);
  }
  void Forward() { fftw_execute(forward_); }
  // Unnormalized: result is n times the true inverse.
  void Inverse() { fftw_execute(inverse_); }
  int size() const { return n_; }

 private:
  int n_;
  double* real_;
  fftw_complex* complex_;
  fftw_plan forward_;
  fftw_plan inverse_;
};

// Window of win_length centered inside fft_size.
std::vector<double> PaddedWindow(const StftConfig& config) {
  std::vector<double> window(config.fft_size, 0.0);
  std::vector<double> hann = HannWindow(config.win_length);
  const int offset = (config.fft_size - config.win_length) / 2;
  std::copy(hann.begin(), hann.end(), window.begin() + offset);
  return window;
}

void ValidateConfig(const StftConfig& config) {
  if (config.fft_size <= 0 || config.hop_length <= 0 ||
      config.win_length <= 0 || config.win_length > config.fft_size) {
    throw Error("invalid STFT configuration");
  }
}

}  // namespace

int NumFrames(size_t length, int hop_length) {
  return static_cast<int>((length + hop_length - 1) / hop_length);
}

std::vector<double> HannWindow(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  }
  return w;
}

ComplexMatrix Stft(std::span<const double> samples, const StftConfig& config) {
  ValidateConfig(config);
  const int frames = NumFrames(samples.size(), config.hop_length);
  const int bins = config.fft_size / 2 + 1;
  const int half = config.fft_size / 2;
  const auto len = static_cast<long>(samples.size());
  const std::vector<double> window = PaddedWindow(config);

  ComplexMatrix out(frames, bins);
  RealFft fft(config.fft_size);
  for (int t = 0; t < frames; ++t) {
    const long start = static_cast<long>(t) * config.hop_length - half;
    double* buf = fft.real();
    for (int n = 0; n < config.fft_size; ++n) {
      const long idx = start + n;
      buf[n] = (idx >= 0 && idx < len) ? samples[idx] * window[n] : 0.0;
    }
    fft.Forward();
    const std::complex<double>* spec = fft.spectrum();
    for (int k = 0; k < bins; ++k) out(t, k) = spec[k];
  }
  return out;
}

std::vector<double> Istft(const ComplexMatrix& spectrum, size_t length,
                          const StftConfig& config) {
  ValidateConfig(config);
  const int bins = config.fft_size / 2 + 1;
  if (spectrum.cols() != bins) {
    throw Error(fmt::format("Istft: expected {} bins, got {}", bins,
                            spectrum.cols()));
  }
  const int half = config.fft_size / 2;
  const auto len = static_cast<long>(length);
  const std::vector<double> window = PaddedWindow(config);
  std::vector<double> out(length, 0.0);
  std::vector<double> norm(length, 0.0);

  RealFft fft(config.fft_size);
  const double scale = 1.0 / config.fft_size;
  for (int t = 0; t < spectrum.rows(); ++t) {
    std::complex<double>* spec = fft.spectrum();
    for (int k = 0; k < bins; ++k) spec[k] = spectrum(t, k);
    fft.Inverse();
    const double* frame = fft.real();
    const long start = static_cast<long>(t) * config.hop_length - half;
    for (int n = 0; n < config.fft_size; ++n) {
      const long idx = start + n;
      if (idx < 0 || idx >= len) continue;
      out[idx] += frame[n] * scale * window[n];
      norm[idx] += window[n] * window[n];
    }
  }
  for (size_t i = 0; i < length; ++i) {
    if (norm[i] > 1e-8) out[i] /= norm[i];
  }
  return out;
}

double HzToMel(double hz) {
  constexpr double kFSp = 200.0 / 3.0;
  constexpr double kMinLogHz = 1000.0;
  constexpr double kMinLogMel = kMinLogHz / kFSp;
  const double logstep = std::log(6.4) / 27.0;
  if (hz < kMinLogHz) return hz / kFSp;
  return kMinLogMel + std::log(hz / kMinLogHz) / logstep;
}

double MelToHz(double mel) {
  constexpr double kFSp = 200.0 / 3.0;
  constexpr double kMinLogHz = 1000.0;
  constexpr double kMinLogMel = kMinLogHz / kFSp;
  const double logstep = std::log(6.4) / 27.0;
  if (mel < kMinLogMel) return mel * kFSp;
  return kMinLogHz * std::exp(logstep * (mel - kMinLogMel));
}

Matrix MelFilterbank(int sample_rate, int fft_size, int num_mels, double fmin,
                     double fmax) {
  const int bins = fft_size / 2 + 1;
  const double mel_lo = HzToMel(fmin);
  const double mel_hi = HzToMel(fmax);
  std::vector<double> edges(num_mels + 2);
  for (int i = 0; i < num_mels + 2; ++i) {
    edges[i] = MelToHz(mel_lo + (mel_hi - mel_lo) * i / (num_mels + 1));
  }
  Matrix fb = Matrix::Zero(num_mels, bins);
  for (int m = 0; m < num_mels; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    const double enorm = 2.0 / (hi - lo);
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / fft_size;
      const double rise = (f - lo) / (center - lo);
      const double fall = (hi - f) / (hi - center);
      fb(m, k) = std::max(0.0, std::min(rise, fall)) * enorm;
    }
  }
  return fb;
}

std::vector<double> FftConvolve(std::span<const double> a,
                                std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  const size_t out_len = a.size() + b.size() - 1;
  if (std::min(a.size(), b.size()) <= 32) {
    std::vector<double> out(out_len, 0.0);
    for (size_t i = 0; i < a.size(); ++i) {
      for (size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    }
    return out;
  }
  int n = 1;
  while (static_cast<size_t>(n) < out_len) n <<= 1;
  const int bins = n / 2 + 1;
  RealFft fft(n);
  std::vector<std::complex<double>> spec_a(bins);
  std::fill(fft.real(), fft.real() + n, 0.0);
  std::copy(a.begin(), a.end(), fft.real());
  fft.Forward();
  std::copy(fft.spectrum(), fft.spectrum() + bins, spec_a.begin());
  std::fill(fft.real(), fft.real() + n, 0.0);
  std::copy(b.begin(), b.end(), fft.real());
  fft.Forward();
  std::complex<double>* spec = fft.spectrum();
  for (int k = 0; k < bins; ++k) spec[k] *= spec_a[k];
  fft.Inverse();
  std::vector<double> out(out_len);
  for (size_t i = 0; i < out_len; ++i) out[i] = fft.real()[i] / n;
  return out;
}

}  // namespace envconv
