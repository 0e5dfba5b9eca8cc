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

// Conversion of a source utterance toward the environment of a reference,
// and mel-to-waveform synthesis.

#ifndef ENVCONV_INFERENCE_H_
#define ENVCONV_INFERENCE_H_

#include <filesystem>
#include <memory>
#include <string>

#include "envconv/audio.h"
#include "envconv/features.h"
#include "envconv/model.h"

namespace envconv {

class Vocoder {
 public:
  virtual ~Vocoder() = default;
  // mel: unpadded T x 80 log-mel. Returns a 22050 Hz waveform.
  virtual Waveform Synthesize(const Matrix& mel) = 0;
};

// Griffin-Lim phase reconstruction from the pseudo-inverted mel filterbank,
// zero initial phase. Output length is T * hop.
class GriffinLimVocoder : public Vocoder {
 public:
  explicit GriffinLimVocoder(int iterations = 64) : iterations_(iterations) {}
  Waveform Synthesize(const Matrix& mel) override;

 private:
  int iterations_;
};

// Runs an external program. `command` is a shell command in which "{mel}" is
// replaced by a mel file (see WriteMelFile) and "{wav}" by the path the
// program must write its 22050 Hz output to.
class ExternalVocoder : public Vocoder {
 public:
  explicit ExternalVocoder(std::string command) : command_(std::move(command)) {}
  Waveform Synthesize(const Matrix& mel) override;

 private:
  std::string command_;
};

// "griffin-lim" or "external".
std::unique_ptr<Vocoder> MakeVocoder(const std::string& kind, int iterations,
                                     const std::string& command);

// Mel file: magic "ENVMEL\0\0", u32 version 1, u32 frames, u32 channels,
// then f32 values row-major.
void WriteMelFile(const std::filesystem::path& path, const Matrix& mel);
Matrix ReadMelFile(const std::filesystem::path& path);

// Keeps the central `max_frames` frames.
MelSpectrogram CenterCrop(const MelSpectrogram& mel, int max_frames);

// Mel-level conversion. source and reference are unpadded; the source must not
// exceed the model's max_frames, a longer reference is center-cropped. The
// result is unpadded to the source length.
MelSpectrogram ConvertMel(EffectConversionModel& model, const MelSpectrogram& source,
                          const MelSpectrogram& reference, double alpha);

struct ConversionResult {
  MelSpectrogram mel;
  Waveform wave;
};

// Waveform-level conversion; inputs at other rates are resampled.
ConversionResult Convert(EffectConversionModel& model, const Waveform& source,
                         const Waveform& reference, double alpha, Vocoder& vocoder);

}  // namespace envconv

#endif  // ENVCONV_INFERENCE_H_
