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

#include "envconv/inference.h"

#include <atomic>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include <unistd.h>

#include <Eigen/QR>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "envconv/dsp.h"

namespace envconv {
namespace {

namespace fs = std::filesystem;

constexpr char kMelMagic[8] = {'E', 'N', 'V', 'M', 'E', 'L', '\0', '\0'};

const Matrix& MelPseudoInverse() {
  static const Matrix pinv = [] {
    const Matrix& fb = DefaultMelFilterbank();  // 80 x 513
    Eigen::MatrixXd dense = fb;
    Eigen::MatrixXd inv = dense.completeOrthogonalDecomposition().pseudoInverse();
    return Matrix(inv);  // 513 x 80
  }();
  return pinv;
}

void ReplaceAll(std::string& s, const std::string& from, const std::string& to) {
  for (size_t pos = s.find(from); pos != std::string::npos;
       pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

}  // namespace

Waveform GriffinLimVocoder::Synthesize(const Matrix& mel) {
  if (mel.cols() != kNumMels) {
    throw Error(fmt::format("vocoder: expected {} mel channels", kNumMels));
  }
  const int frames = static_cast<int>(mel.rows());
  Waveform out;
  out.sample_rate = kSampleRate;
  if (frames == 0) return out;
  const StftConfig cfg = DefaultStftConfig();
  const size_t length = static_cast<size_t>(frames) * cfg.hop_length;

  // Target magnitude, frames x bins.
  const Matrix linear = mel.array().exp().matrix();
  Matrix magnitude = (MelPseudoInverse() * linear.transpose()).transpose();
  magnitude = magnitude.cwiseMax(0.0);

  ComplexMatrix spec = magnitude.cast<std::complex<double>>();
  std::vector<double> signal = Istft(spec, length, cfg);
  for (int it = 0; it < iterations_; ++it) {
    const ComplexMatrix rebuilt = Stft(signal, cfg);
    for (Eigen::Index r = 0; r < spec.rows(); ++r) {
      for (Eigen::Index c = 0; c < spec.cols(); ++c) {
        const std::complex<double> z = rebuilt(r, c);
        const double a = std::abs(z);
        spec(r, c) = a > 0.0 ? magnitude(r, c) * (z / a)
                             : std::complex<double>(magnitude(r, c), 0.0);
      }
    }
    signal = Istft(spec, length, cfg);
  }
  out.samples = std::move(signal);
  return out;
}

Waveform ExternalVocoder::Synthesize(const Matrix& mel) {
  static std::atomic<int> counter{0};
  const fs::path dir = fs::temp_directory_path() /
                       fmt::format("envconv_vocoder_{}_{}", ::getpid(), counter++);
  fs::create_directories(dir);
  const fs::path mel_path = dir / "input.mel";
  const fs::path wav_path = dir / "output.wav";
  WriteMelFile(mel_path, mel);
  std::string cmd = command_;
  ReplaceAll(cmd, "{mel}", mel_path.string());
  ReplaceAll(cmd, "{wav}", wav_path.string());
  spdlog::debug("external vocoder: {}", cmd);
  const int rc = std::system(cmd.c_str());
  if (rc != 0) {
    fs::remove_all(dir);
    throw Error(fmt::format("external vocoder exited with status {}", rc));
  }
  Waveform wave = ReadWav(wav_path);
  fs::remove_all(dir);
  if (wave.sample_rate != kSampleRate) wave = Resample(wave, kSampleRate);
  return wave;
}

std::unique_ptr<Vocoder> MakeVocoder(const std::string& kind, int iterations,
                                     const std::string& command) {
  if (kind == "griffin-lim") {
    if (iterations <= 0) throw Error("vocoder iterations must be positive");
    return std::make_unique<GriffinLimVocoder>(iterations);
  }
  if (kind == "external") {
    if (command.empty()) throw Error("external vocoder needs a command");
    return std::make_unique<ExternalVocoder>(command);
  }
  throw Error(fmt::format("unknown vocoder '{}'", kind));
}

void WriteMelFile(const fs::path& path, const Matrix& mel) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  out.write(kMelMagic, sizeof(kMelMagic));
  const uint32_t header[3] = {1, static_cast<uint32_t>(mel.rows()),
                              static_cast<uint32_t>(mel.cols())};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  for (Eigen::Index r = 0; r < mel.rows(); ++r) {
    for (Eigen::Index c = 0; c < mel.cols(); ++c) {
      const float v = static_cast<float>(mel(r, c));
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
  if (!out) throw Error(fmt::format("short write to {}", path.string()));
}

Matrix ReadMelFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot read {}", path.string()));
  char magic[8];
  uint32_t header[3];
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in || std::memcmp(magic, kMelMagic, sizeof(magic)) != 0 || header[0] != 1) {
    throw Error(fmt::format("{}: not a version 1 mel file", path.string()));
  }
  Matrix mel(header[1], header[2]);
  for (Eigen::Index r = 0; r < mel.rows(); ++r) {
    for (Eigen::Index c = 0; c < mel.cols(); ++c) {
      float v;
      in.read(reinterpret_cast<char*>(&v), sizeof(v));
      mel(r, c) = v;
    }
  }
  if (!in) throw Error(fmt::format("{}: truncated", path.string()));
  return mel;
}

MelSpectrogram CenterCrop(const MelSpectrogram& mel, int max_frames) {
  if (mel.frame_count <= max_frames) return mel;
  const int offset = (mel.frame_count - max_frames) / 2;
  MelSpectrogram out;
  out.frames = mel.frames.middleRows(offset, max_frames);
  out.frame_count = max_frames;
  out.pad_mask.assign(max_frames, true);
  return out;
}

MelSpectrogram ConvertMel(EffectConversionModel& model, const MelSpectrogram& source,
                          const MelSpectrogram& reference, double alpha) {
  const int max_frames = model.config().max_frames;
  if (source.frame_count > max_frames) {
    throw Error(fmt::format(
        "source has {} frames but the model accepts at most {}; split the input "
        "and convert the pieces separately",
        source.frame_count, max_frames));
  }
  if (source.frame_count <= 0 || reference.frame_count <= 0) {
    throw Error("conversion inputs must be non-empty");
  }
  MelSpectrogram x = source;
  MelSpectrogram y = CenterCrop(reference, max_frames);
  ProsodyTrack px{std::vector<double>(x.frame_count, 0.0),
                  std::vector<double>(x.frame_count, 0.0)};
  ProsodyTrack py{std::vector<double>(y.frame_count, 0.0),
                  std::vector<double>(y.frame_count, 0.0)};
  PadToMax(x, px, max_frames);
  PadToMax(y, py, max_frames);
  const MelBatch xb = StackMels({&x.frames}, {&x.pad_mask});
  const MelBatch yb = StackMels({&y.frames}, {&y.pad_mask});

  nn::Tape tape(/*record=*/false);
  ForwardOptions options;
  options.alpha = alpha;
  const ForwardResult f = model.Forward(tape, xb, yb, options);
  MelSpectrogram out;
  out.frames = f.mel.value().topRows(source.frame_count);
  out.frame_count = source.frame_count;
  out.pad_mask.assign(source.frame_count, true);
  return out;
}

ConversionResult Convert(EffectConversionModel& model, const Waveform& source,
                         const Waveform& reference, double alpha, Vocoder& vocoder) {
  auto at_rate = [](const Waveform& w) {
    return w.sample_rate == kSampleRate ? w : Resample(w, kSampleRate);
  };
  ConversionResult r;
  r.mel = ConvertMel(model, ComputeMel(at_rate(source)), ComputeMel(at_rate(reference)),
                     alpha);
  r.wave = vocoder.Synthesize(r.mel.frames);
  return r;
}

}  // namespace envconv
