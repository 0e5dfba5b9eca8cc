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

#ifndef ENVCONV_DSP_H_
#define ENVCONV_DSP_H_

#include <complex>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "envconv/common.h"

namespace envconv {

using ComplexMatrix = Eigen::Matrix<std::complex<double>, Eigen::Dynamic,
                                    Eigen::Dynamic, Eigen::RowMajor>;

struct StftConfig {
  int fft_size = 1024;
  int win_length = 1024;
  int hop_length = 256;
};

// Number of centered frames for a signal of `length` samples:
// ceil(length / hop). Frame t is centered on sample t * hop.
int NumFrames(size_t length, int hop_length);

// Periodic Hann window of length `n`.
std::vector<double> HannWindow(int n);

// Centered STFT with zero padding outside the signal. Returns
// NumFrames(len) x (fft_size / 2 + 1).
ComplexMatrix Stft(std::span<const double> samples, const StftConfig& config);

// Weighted overlap-add inverse of Stft; output has exactly `length` samples.
std::vector<double> Istft(const ComplexMatrix& spectrum, size_t length,
                          const StftConfig& config);

// Slaney-style mel filterbank (area normalized), num_mels x (fft_size/2 + 1).
Matrix MelFilterbank(int sample_rate, int fft_size, int num_mels, double fmin,
                     double fmax);

double HzToMel(double hz);
double MelToHz(double mel);

// Full linear convolution via FFT; output length a.size() + b.size() - 1.
std::vector<double> FftConvolve(std::span<const double> a,
                                std::span<const double> b);

}  // namespace envconv

#endif  // ENVCONV_DSP_H_
