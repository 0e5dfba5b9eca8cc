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

#include "envconv/evaluation.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>

#include <fmt/format.h>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <spdlog/spdlog.h>

#include "envconv/features.h"
#include "envconv/inference.h"

namespace envconv {
namespace {

namespace fs = std::filesystem;

const Matrix& DctBasis(int n) {
  // Rows 1..13 of the orthonormal DCT-II matrix, transposed: n x 13.
  static std::map<int, Matrix> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  Matrix basis(n, kNumCepstra);
  for (int k = 1; k <= kNumCepstra; ++k) {
    for (int i = 0; i < n; ++i) {
      basis(i, k - 1) =
          std::sqrt(2.0 / n) * std::cos(std::numbers::pi * k * (2 * i + 1) / (2.0 * n));
    }
  }
  return cache.emplace(n, std::move(basis)).first->second;
}

const cv::Scalar kPitchColor(0, 0, 255);    // BGR red
const cv::Scalar kEnergyColor(160, 32, 160);  // purple
const cv::Scalar kInk(20, 20, 20);

}  // namespace

double McdConstant() { return 10.0 * std::sqrt(2.0) / std::log(10.0); }

Matrix MelCepstraFromMel(const Matrix& log_mel) {
  if (log_mel.cols() < kNumCepstra + 1) throw Error("mel cepstra: too few channels");
  return log_mel * DctBasis(static_cast<int>(log_mel.cols()));
}

Matrix ComputeMelCepstra(const Waveform& wave) {
  return MelCepstraFromMel(ComputeMel(wave).frames);
}

double Mcd(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(fmt::format("mcd: shapes differ ({}x{} vs {}x{})", a.rows(), a.cols(),
                            b.rows(), b.cols()));
  }
  if (a.rows() == 0) throw Error("mcd: no frames");
  return McdConstant() * (a - b).rowwise().norm().mean();
}

Converter ModelConverter(EffectConversionModel& model, double alpha) {
  return [&model, alpha](const EvalItem& item) {
    return ConvertMel(model, item.source->mel, item.reference->mel, alpha).frames;
  };
}

std::vector<Environment> ParseTargets(const std::string& text) {
  if (text == "all") {
    return {kReverberantEnvironments.begin(), kReverberantEnvironments.end()};
  }
  const auto env = ParseEnvironment(text);
  if (!env) throw Error(fmt::format("unknown target environment '{}'", text));
  return {*env};
}

EvaluationReport EvaluateCorpus(const FeatureSet& set, Split split,
                                const std::vector<Environment>& targets,
                                const Converter& converter) {
  // clip -> env -> record index
  std::map<std::string, std::map<Environment, int>> by_clip;
  for (size_t i = 0; i < set.records.size(); ++i) {
    by_clip[set.records[i].clip_id][set.records[i].environment] = static_cast<int>(i);
  }
  std::vector<std::string> eval_clips;
  std::map<std::string, Split> split_of;
  for (const auto& e : set.index) {
    split_of[e.clip_id] = e.split;
    if (e.split == split && e.environment == Environment::kClean) {
      eval_clips.push_back(e.clip_id);
    }
  }
  if (eval_clips.empty()) {
    throw Error(fmt::format("evaluation: the {} split is empty", SplitName(split)));
  }
  std::sort(eval_clips.begin(), eval_clips.end());

  EvaluationReport report;
  for (Environment target : targets) {
    std::vector<double> scores;
    for (const std::string& clip : eval_clips) {
      const auto& variants = by_clip.at(clip);
      if (!variants.count(target)) {
        throw Error(fmt::format("evaluation: {} has no {} version", clip,
                                EnvironmentName(target)));
      }
      // Reference: next clip (cyclically) in the target environment,
      // same split first.
      const FeatureRecord* reference = nullptr;
      for (int pass = 0; pass < 2 && !reference; ++pass) {
        auto it = by_clip.upper_bound(clip);
        for (size_t n = 0; n + 1 < by_clip.size(); ++n, ++it) {
          if (it == by_clip.end()) it = by_clip.begin();
          if (it->first == clip) continue;
          if (pass == 0 && split_of[it->first] != split) continue;
          if (auto v = it->second.find(target); v != it->second.end()) {
            reference = &set.records[v->second];
            break;
          }
        }
      }
      if (!reference) {
        spdlog::warn("evaluation: no other clip in {}; {} is its own reference",
                     EnvironmentName(target), clip);
        reference = &set.records[variants.at(target)];
      }
      const FeatureRecord& truth = set.records[variants.at(target)];
      const Matrix truth_cep = MelCepstraFromMel(truth.mel.frames);
      for (const auto& [env, idx] : variants) {
        if (env == target) continue;
        EvalItem item{&set.records[idx], reference, &truth, target};
        const Matrix converted = converter(item);
        const double score = Mcd(MelCepstraFromMel(converted), truth_cep);
        scores.push_back(score);
        report.clips.push_back({clip, env, target, score});
      }
    }
    McdRow row;
    row.target = target;
    row.count = static_cast<int>(scores.size());
    for (double s : scores) row.mean += s;
    row.mean /= row.count;
    if (row.count > 1) {
      double ss = 0.0;
      for (double s : scores) ss += (s - row.mean) * (s - row.mean);
      row.stddev = std::sqrt(ss / (row.count - 1));
    }
    report.rows.push_back(row);
  }
  return report;
}

std::string FormatReportSummary(const EvaluationReport& report) {
  std::string out = "target_env\tmean_mcd_db\tstd_mcd_db\tcount\n";
  for (const McdRow& r : report.rows) {
    out += fmt::format("{}\t{:.4f}\t{:.4f}\t{}\n", EnvironmentName(r.target), r.mean,
                       r.stddev, r.count);
  }
  return out;
}

void WriteReport(const fs::path& path, const EvaluationReport& report) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  out << FormatReportSummary(report) << "\n";
  out << "clip_id\tsource_env\ttarget_env\tmcd_db\n";
  for (const ClipScore& c : report.clips) {
    out << fmt::format("{}\t{}\t{}\t{:.4f}\n", c.clip_id, EnvironmentName(c.source),
                       EnvironmentName(c.target), c.mcd);
  }
  if (!out) throw Error(fmt::format("short write to {}", path.string()));
}

// ---------------------------------------------------------------------------
// Plots

PlotTrack PlotTrackFromWave(const Waveform& wave) {
  const Waveform w = wave.sample_rate == kSampleRate ? wave : Resample(wave, kSampleRate);
  return {ComputeMel(w).frames, EstimatePitch(w), ComputeEnergy(w)};
}

PlotTrack PlotTrackFromRecord(const FeatureRecord& record) {
  return {record.mel.frames, record.prosody.pitch, record.prosody.energy};
}

int PlotFrameX(int panel, int t, int frames) {
  const double w = PlotLayout::PlotWidth();
  return panel * PlotLayout::kPanelWidth + PlotLayout::kLeft +
         static_cast<int>(std::floor((t + 0.5) * w / frames));
}

void PlotComparison(const PlotTrack& converted, const PlotTrack& truth,
                    const fs::path& path) {
  const int frames = static_cast<int>(converted.mel.rows());
  for (const PlotTrack* p : {&converted, &truth}) {
    if (p->mel.rows() != frames || static_cast<int>(p->pitch.size()) != frames ||
        static_cast<int>(p->energy.size()) != frames) {
      throw Error("plot: converted and ground-truth tracks must be aligned");
    }
  }
  if (frames == 0) throw Error("plot: empty tracks");
  using L = PlotLayout;
  cv::Mat image(L::kPanelHeight, 2 * L::kPanelWidth, CV_8UC3, cv::Scalar(255, 255, 255));

  const double lo = std::min(converted.mel.minCoeff(), truth.mel.minCoeff());
  const double hi = std::max(converted.mel.maxCoeff(), truth.mel.maxCoeff());
  double e_max = 0.0;
  for (const PlotTrack* p : {&converted, &truth}) {
    for (double e : p->energy) e_max = std::max(e_max, e);
  }
  const int pw = L::PlotWidth(), ph = L::PlotHeight();
  const int channels = static_cast<int>(converted.mel.cols());

  const std::array<std::pair<const PlotTrack*, const char*>, 2> panels = {
      std::pair{&converted, "converted"}, std::pair{&truth, "ground truth"}};
  for (int panel = 0; panel < 2; ++panel) {
    const PlotTrack& track = *panels[panel].first;
    const int x0 = panel * L::kPanelWidth + L::kLeft;
    const int y0 = L::kTop;

    // Spectrogram: low channels at the bottom.
    cv::Mat gray(channels, frames, CV_8UC1);
    for (int c = 0; c < channels; ++c) {
      for (int t = 0; t < frames; ++t) {
        const double v = hi > lo ? (track.mel(t, c) - lo) / (hi - lo) : 0.0;
        gray.at<uint8_t>(channels - 1 - c, t) =
            static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
    }
    cv::Mat scaled, colored;
    cv::resize(gray, scaled, cv::Size(pw, ph), 0, 0, cv::INTER_NEAREST);
    cv::applyColorMap(scaled, colored, cv::COLORMAP_BONE);
    colored.copyTo(image(cv::Rect(x0, y0, pw, ph)));

    auto pitch_y = [&](double hz) {
      return y0 + ph - 1 -
             static_cast<int>(std::lround(std::min(hz, L::kMaxPitchHz) / L::kMaxPitchHz *
                                          (ph - 1)));
    };
    auto energy_y = [&](double e) {
      return y0 + ph - 1 -
             static_cast<int>(std::lround(e_max > 0 ? e / e_max * (ph - 1) : 0.0));
    };
    // Energy first so the pitch curve stays on top.
    for (int t = 0; t + 1 < frames; ++t) {
      cv::line(image, {PlotFrameX(panel, t, frames), energy_y(track.energy[t])},
               {PlotFrameX(panel, t + 1, frames), energy_y(track.energy[t + 1])},
               kEnergyColor, 1, cv::LINE_8);
    }
    for (int t = 0; t < frames; ++t) {
      if (track.pitch[t] <= 0.0) continue;
      const cv::Point a(PlotFrameX(panel, t, frames), pitch_y(track.pitch[t]));
      if (t + 1 < frames && track.pitch[t + 1] > 0.0) {
        cv::line(image, a,
                 {PlotFrameX(panel, t + 1, frames), pitch_y(track.pitch[t + 1])},
                 kPitchColor, 2, cv::LINE_8);
      } else {
        cv::circle(image, a, 1, kPitchColor, cv::FILLED, cv::LINE_8);
      }
    }

    // Frame and labels.
    cv::rectangle(image, cv::Rect(x0 - 1, y0 - 1, pw + 2, ph + 2), kInk, 1);
    const int font = cv::FONT_HERSHEY_SIMPLEX;
    cv::putText(image, panels[panel].second, {x0, y0 - 12}, font, 0.5, kInk, 1,
                cv::LINE_AA);
    cv::putText(image, "frame", {x0 + pw / 2 - 20, y0 + ph + 36}, font, 0.4, kInk, 1,
                cv::LINE_AA);
    cv::putText(image, "0", {x0 - 4, y0 + ph + 16}, font, 0.35, kInk, 1, cv::LINE_AA);
    cv::putText(image, std::to_string(frames), {x0 + pw - 16, y0 + ph + 16}, font,
                0.35, kInk, 1, cv::LINE_AA);
    cv::putText(image, "mel", {x0 - 48, y0 + ph / 2}, font, 0.4, kInk, 1, cv::LINE_AA);
    cv::putText(image, "F0 Hz", {x0 + pw + 6, y0 + 10}, font, 0.35, kPitchColor, 1,
                cv::LINE_AA);
    cv::putText(image, "800", {x0 + pw + 6, y0 + 26}, font, 0.35, kInk, 1, cv::LINE_AA);
    cv::putText(image, "0", {x0 + pw + 6, y0 + ph}, font, 0.35, kInk, 1, cv::LINE_AA);
    cv::putText(image, "energy", {x0 + pw + 6, y0 + ph / 2}, font, 0.35, kEnergyColor,
                1, cv::LINE_AA);
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), image)) {
    throw Error(fmt::format("cannot write image {}", path.string()));
  }
}

}  // namespace envconv
