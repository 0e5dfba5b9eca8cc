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

// Mel-cepstral distortion and spectrum/prosody comparison plots.

#ifndef ENVCONV_EVALUATION_H_
#define ENVCONV_EVALUATION_H_

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "envconv/audio.h"
#include "envconv/feature_cache.h"
#include "envconv/model.h"

namespace envconv {

inline constexpr int kNumCepstra = 13;

// 10 * sqrt(2) / ln(10).
double McdConstant();

// Orthonormal DCT-II of each log-mel row, coefficients 1..13 (T x 13).
Matrix MelCepstraFromMel(const Matrix& log_mel);
Matrix ComputeMelCepstra(const Waveform& wave);

// Mean per-frame Euclidean distance scaled by McdConstant(), in dB. Frame
// counts must match.
double Mcd(const Matrix& a, const Matrix& b);

struct EvalItem {
  const FeatureRecord* source = nullptr;
  const FeatureRecord* reference = nullptr;  // another clip in the target env
  const FeatureRecord* truth = nullptr;      // the source clip in the target env
  Environment target = Environment::kBathroom;
};

// Returns the converted T x 80 log-mel for an item.
using Converter = std::function<Matrix(const EvalItem&)>;

// Model conversion at a fixed alpha.
Converter ModelConverter(EffectConversionModel& model, double alpha = 1.0);

struct McdRow {
  Environment target = Environment::kBathroom;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for a single item
  int count = 0;
};

struct ClipScore {
  std::string clip_id;
  Environment source = Environment::kClean;
  Environment target = Environment::kBathroom;
  double mcd = 0.0;
};

struct EvaluationReport {
  std::vector<McdRow> rows;
  std::vector<ClipScore> clips;
};

// "all" selects the four reverberant environments.
std::vector<Environment> ParseTargets(const std::string& text);

// For every clip of `split` and every target, converts each non-target variant
// of the clip with a reference taken from a different clip in the target
// environment (the same split is preferred) and scores it against the clip's
// target-environment version.
EvaluationReport EvaluateCorpus(const FeatureSet& set, Split split,
                                const std::vector<Environment>& targets,
                                const Converter& converter);

// Tab-separated: a summary table, a blank line, then per-clip scores.
void WriteReport(const std::filesystem::path& path, const EvaluationReport& report);
std::string FormatReportSummary(const EvaluationReport& report);

// ---- plots ----

struct PlotTrack {
  Matrix mel;                  // T x 80 log-mel
  std::vector<double> pitch;   // Hz, 0 = unvoiced
  std::vector<double> energy;
};

PlotTrack PlotTrackFromWave(const Waveform& wave);
PlotTrack PlotTrackFromRecord(const FeatureRecord& record);

// Panel geometry, in pixels.
struct PlotLayout {
  static constexpr int kPanelWidth = 520;
  static constexpr int kPanelHeight = 320;
  static constexpr int kLeft = 60;
  static constexpr int kRight = 60;
  static constexpr int kTop = 36;
  static constexpr int kBottom = 48;
  static constexpr int PlotWidth() { return kPanelWidth - kLeft - kRight; }
  static constexpr int PlotHeight() { return kPanelHeight - kTop - kBottom; }
  static constexpr double kMaxPitchHz = 800.0;
};

// Horizontal pixel of the center of frame `t` in panel `panel` (0 or 1).
int PlotFrameX(int panel, int t, int frames);

// Side-by-side spectrograms (converted left, ground truth right) with the
// pitch contour in red over voiced frames and energy in purple. Tracks must
// have equal frame counts. The format follows the file extension.
void PlotComparison(const PlotTrack& converted, const PlotTrack& truth,
                    const std::filesystem::path& path);

}  // namespace envconv

#endif  // ENVCONV_EVALUATION_H_
