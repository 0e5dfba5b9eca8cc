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

// Acceptance checks A1..A9. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. "--only A3,A8" restricts the run.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "envconv/checkpoint.h"
#include "envconv/dataset.h"
#include "envconv/evaluation.h"
#include "envconv/feature_cache.h"
#include "envconv/inference.h"
#include "envconv/training.h"
#include "support/synth_speech.h"

namespace envconv {
namespace {

namespace fs = std::filesystem;
using nn::Tape;

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void Report(const std::string& id, const Outcome& o) {
  std::cout << id << " " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
  if (!o.pass) ++failures;
}

MelBatch RandomBatch(int batch, int time, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(-4.0, 2.0);
  MelBatch b;
  b.shape = {batch, time};
  b.frames.resize(batch * time, kNumMels);
  for (Eigen::Index i = 0; i < b.frames.size(); ++i) b.frames.data()[i] = n(rng);
  b.mask.assign(batch * time, true);
  return b;
}

// Random records sized for the micro model.
TrainingData MicroData(uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<FeatureRecord> records;
  for (int e = 0; e < kNumEnvironments; ++e) {
    for (int c = 0; c < 2; ++c) {
      const int t = 12 + static_cast<int>(rng() % 5);
      FeatureRecord r;
      r.clip_id = fmt::format("clip{}", c);
      r.environment = EnvironmentFromIndex(e);
      r.mel.frames.resize(t, kNumMels);
      for (Eigen::Index i = 0; i < r.mel.frames.size(); ++i) {
        r.mel.frames.data()[i] = -4.0 + 0.5 * e + n(rng);
      }
      r.mel.frame_count = t;
      r.mel.pad_mask.assign(t, true);
      for (int k = 0; k < t; ++k) {
        r.prosody.pitch.push_back(k % 4 == 0 ? 0.0 : 100.0 + 50.0 * std::abs(n(rng)));
        r.prosody.energy.push_back(4.0 + std::abs(n(rng)));
      }
      records.push_back(std::move(r));
    }
  }
  return BuildTrainingData(records, ModelConfig::Micro().max_frames);
}

// ---- A1 ----

Outcome A1() {
  const auto t0 = Clock::now();
  EffectConversionModel model{ModelConfig::Micro()};
  const MelBatch x = RandomBatch(2, 16, 1);
  auto grads = [&](bool reverse) {
    model.params().ZeroGrad();
    Tape tape;
    const ForwardResult f = model.Forward(tape, x, x, {});
    tape.Backward(LossAdvContent(model, tape, f.content, x, {1, 3}, reverse));
    std::vector<Matrix> g;
    for (nn::Parameter* p : model.params().WithPrefix(modules::kEncoder)) {
      g.push_back(p->grad);
    }
    return g;
  };
  const auto plain = grads(false);
  const auto reversed = grads(true);
  double worst = 0.0, scale = 0.0;
  for (size_t i = 0; i < plain.size(); ++i) {
    for (Eigen::Index k = 0; k < plain[i].size(); ++k) {
      const double a = reversed[i].data()[k], b = -plain[i].data()[k];
      scale = std::max(scale, std::abs(b));
      const double den = std::max(std::abs(a), std::abs(b));
      if (den > 0.0) worst = std::max(worst, std::abs(a - b) / den);
    }
  }
  const double secs = Seconds(t0);
  return {worst <= 1e-6 && scale > 0.0 && secs < 10.0,
          fmt::format("GRL encoder gradient: max rel err {:.3g} (limit 1e-6), max |g| {:.3g}, "
                      "{} tensors, {:.2f}s (limit 10s)",
                      worst, scale, plain.size(), secs)};
}

// ---- A2 ----

// Central differences only estimate a derivative when the +-h segment stays on
// one smooth piece, so parameters whose segment switches a ReLU or max-pool
// branch are redrawn. The unfiltered worst case is reported alongside.
Outcome A2() {
  const auto t0 = Clock::now();
  const TrainingData data = MicroData(2);
  EffectConversionModel model{ModelConfig::Micro()};
  model.stats() = FitStats(data);
  std::mt19937_64 rng(12);
  const TrainBatch batch = MakeBatch(data, 3, rng);
  ForwardOptions fo;
  fo.batch_norm_training = false;
  const std::array<bool, 5> all{true, true, true, true, true};
  uint64_t signature = 0;
  auto loss = [&](bool record) {
    Tape tape(record);
    // Reversal off: the check targets the plain gradient of the total.
    const StepLosses l = ComputeLosses(model, tape, batch, fo, false);
    nn::Var total = CombineLosses(l, {}, all);
    if (record) tape.Backward(total);
    signature = tape.branch_signature();
    return total.scalar();
  };
  model.params().ZeroGrad();
  loss(true);
  const uint64_t base_signature = signature;

  std::vector<std::pair<nn::Parameter*, Eigen::Index>> entries;
  for (const auto& p : model.params().all()) {
    if (!p->trainable) continue;
    for (Eigen::Index i = 0; i < p->value.size(); ++i) entries.emplace_back(p.get(), i);
  }
  std::mt19937_64 pick(2024);
  std::shuffle(entries.begin(), entries.end(), pick);
  const double h = 1e-3;
  double worst = 0.0, worst_any = 0.0;
  std::string worst_name;
  int accepted = 0, rejected = 0;
  for (auto [p, i] : entries) {
    if (accepted == 50) break;
    const double analytic = p->grad.data()[i];
    const double keep = p->value.data()[i];
    p->value.data()[i] = keep + h;
    const double up = loss(false);
    const uint64_t sig_up = signature;
    p->value.data()[i] = keep - h;
    const double down = loss(false);
    const uint64_t sig_down = signature;
    p->value.data()[i] = keep;
    const double numeric = (up - down) / (2 * h);
    const double den = std::max(std::abs(analytic), std::abs(numeric));
    const double rel = den > 0.0 ? std::abs(analytic - numeric) / den : 0.0;
    if (sig_up != base_signature || sig_down != base_signature) {
      ++rejected;
      worst_any = std::max(worst_any, rel);
      continue;
    }
    ++accepted;
    worst_any = std::max(worst_any, rel);
    if (rel > worst) {
      worst = rel;
      worst_name = fmt::format("{}[{}] analytic {:.6g} numeric {:.6g}", p->name, i,
                               analytic, numeric);
    }
  }
  const double secs = Seconds(t0);
  return {accepted == 50 && worst <= 1e-3 && secs < 120.0,
          fmt::format("{} sampled parameters on smooth pieces: max rel err {:.3g} (limit "
                      "1e-3) at {}; {} draws redrawn for crossing a ReLU/max-pool branch "
                      "(worst over all draws {:.3g}); {:.1f}s (limit 120s)",
                      accepted, worst, worst_name, rejected, worst_any, secs)};
}

// ---- A3 / A4 / A8 / A9 shared corpus ----

struct ToyCorpus {
  fs::path dir;
  FeatureSet set;
  TrainingData data;
};

ToyCorpus BuildToyCorpus() {
  ToyCorpus c;
  c.dir = testing::TempDir("acceptance_toy");
  testing::WriteToyClips(c.dir / "clean", 8, 7);
  std::array<RoomImpulseResponse, 4> rirs;
  for (size_t i = 0; i < 4; ++i) {
    const Environment env = kReverberantEnvironments[i];
    rirs[i] = SynthesizeRir(env, DefaultRirPreset(env).rt60, 11);
  }
  CorpusOptions options;
  options.ratios = {1.0, 0.0, 0.0};
  options.max_frames = ModelConfig::Toy().max_frames;
  BuildCorpus(c.dir / "clean", c.dir / "corpus", rirs, options);
  BuildFeatureCache(c.dir / "corpus" / "manifest.tsv", c.dir / "features");
  c.set = LoadFeatureSet(c.dir / "features");
  c.data = BuildTrainingData(SelectSplit(c.set, Split::kTrain),
                             ModelConfig::Toy().max_frames);
  return c;
}

TrainConfig ToyTrainConfig(int64_t steps) {
  TrainConfig c;
  c.batch_size = 4;
  c.total_steps = steps;
  c.learning_rate = 1e-4;
  c.checkpoint_every = steps;
  c.log_every = 500;
  c.seed = 1;
  return c;
}

double MeanRecon(const std::vector<StepRecord>& h, size_t first, size_t count) {
  double s = 0.0;
  for (size_t i = first; i < first + count; ++i) s += h[i].losses.recon;
  return s / count;
}

Outcome A3(const ToyCorpus& corpus, std::unique_ptr<EffectConversionModel>& out) {
  const auto t0 = Clock::now();
  TrainConfig c = ToyTrainConfig(2000);
  c.phase1_fraction = 0.0;
  c.phase2_fraction = 0.0;
  TrainResult r;
  try {
    r = Train(c, ModelConfig::Toy(), corpus.data);
  } catch (const Error& e) {
    return {false, fmt::format("training aborted: {}", e.what())};
  }
  bool finite = true;
  for (const StepRecord& s : r.history) {
    for (double v : {s.losses.recon, s.losses.pitch, s.losses.energy,
                     s.losses.adv_content, s.losses.adv_effect}) {
      finite = finite && std::isfinite(v);
    }
  }
  const double start = MeanRecon(r.history, 0, 10);
  const double end = MeanRecon(r.history, r.history.size() - 10, 10);
  out = std::move(r.model);
  const double secs = Seconds(t0);
  return {finite && end <= 0.5 * start && secs < 3 * 3600.0,
          fmt::format("{} items, 2000 phase-3 steps: recon mean of steps 1-10 {:.4f}, "
                      "of steps 1991-2000 {:.4f} (ratio {:.3f}, limit 0.5), all losses "
                      "finite: {}, {:.0f}s",
                      corpus.data.items.size(), start, end, end / start,
                      finite ? "yes" : "no", secs)};
}

Outcome A4(const ToyCorpus& corpus) {
  const auto t0 = Clock::now();
  TrainConfig c = ToyTrainConfig(5000);
  c.phase1_fraction = 0.1;
  c.phase2_fraction = 0.1;
  TrainResult r = Train(c, ModelConfig::Toy(), corpus.data);
  const double effect = ClassifierAccuracy(*r.model, corpus.data, ClassifierSide::kEffect);
  const double content =
      ClassifierAccuracy(*r.model, corpus.data, ClassifierSide::kContent);
  return {effect >= 0.9 && content <= 0.4 && effect > content,
          fmt::format("5000 steps (phases 500/500/4000): effect-side accuracy {:.3f} "
                      "(>= 0.9), content-side {:.3f} (<= 0.4), {:.0f}s",
                      effect, content, Seconds(t0))};
}

// ---- A5 ----

Outcome A5() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 2.0);
  double worst = 0.0;
  for (int pair = 0; pair < 100; ++pair) {
    const int frames = 1 + static_cast<int>(rng() % 40);
    Matrix a(frames, kNumCepstra), b(frames, kNumCepstra);
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      a.data()[i] = n(rng);
      b.data()[i] = n(rng);
    }
    double total = 0.0;
    for (int t = 0; t < frames; ++t) {
      double ss = 0.0;
      for (int k = 0; k < kNumCepstra; ++k) ss += (a(t, k) - b(t, k)) * (a(t, k) - b(t, k));
      total += 10.0 / std::log(10.0) * std::sqrt(2.0 * ss);
    }
    worst = std::max(worst, std::abs(Mcd(a, b) - total / frames));
  }
  const double closed = 10.0 * std::numbers::sqrt2 / std::numbers::ln10;
  double unit_err = 0.0;
  for (int k = 0; k < kNumCepstra; ++k) {
    Matrix a = Matrix::Zero(1, kNumCepstra), b = a;
    b(0, k) = 1.0;
    unit_err = std::max(unit_err, std::abs(Mcd(a, b) - closed));
  }
  const double secs = Seconds(t0);
  return {worst <= 1e-9 && unit_err <= 1e-9 && secs < 5.0,
          fmt::format("100 pairs vs naive loop: max abs diff {:.2g}; unit vector {:.9f} dB "
                      "vs {:.9f} (diff {:.2g}); {:.3f}s",
                      worst, closed + 0.0, closed, unit_err, secs)};
}

// ---- A6 ----

double DecaySlopeDb(const RoomImpulseResponse& rir) {
  const int win = rir.sample_rate / 100;
  std::vector<double> t, db;
  for (size_t start = kPreDelaySamples; start + win <= rir.taps.size(); start += win) {
    double e = 0.0;
    for (int i = 0; i < win; ++i) e += rir.taps[start + i] * rir.taps[start + i];
    t.push_back((start + win / 2.0) / rir.sample_rate);
    db.push_back(10.0 * std::log10(e / win));
  }
  const double n = static_cast<double>(t.size());
  const double mt = std::accumulate(t.begin(), t.end(), 0.0) / n;
  const double md = std::accumulate(db.begin(), db.end(), 0.0) / n;
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < t.size(); ++i) {
    num += (t[i] - mt) * (db[i] - md);
    den += (t[i] - mt) * (t[i] - mt);
  }
  return num / den;
}

Outcome A6() {
  const auto t0 = Clock::now();
  const fs::path dir = testing::TempDir("acceptance_a6");
  testing::WriteToyClips(dir / "clean", 20, 3);
  std::array<RoomImpulseResponse, 4> rirs;
  for (size_t i = 0; i < 4; ++i) {
    const Environment env = kReverberantEnvironments[i];
    rirs[i] = SynthesizeRir(env, DefaultRirPreset(env).rt60, 5);
  }
  const CorpusManifest m = BuildCorpus(dir / "clean", dir / "corpus", rirs, {});
  std::array<int, kNumEnvironments> per_label{};
  for (const auto& e : m.entries) ++per_label[EnvironmentIndex(e.environment)];
  bool balanced = true;
  for (int c : per_label) balanced = balanced && c == 20;

  const Waveform w = testing::SynthesizeSpeech(9);
  RoomImpulseResponse unit;
  unit.taps = {1.0};
  const Waveform y = ApplyRir(w, unit);
  double peak = 0.0;
  for (double s : w.samples) peak = std::max(peak, std::abs(s));
  double identity_err = y.samples.size() == w.samples.size() ? 0.0 : 1.0;
  for (size_t i = 0; i < std::min(y.samples.size(), w.samples.size()); ++i) {
    identity_err = std::max(identity_err, std::abs(y.samples[i] - w.samples[i] * 0.95 / peak));
  }

  double worst_db = 0.0;
  for (const auto& rir : rirs) {
    const double rt60 = DefaultRirPreset(rir.environment).rt60;
    const double drop = DecaySlopeDb(rir) * rt60;
    worst_db = std::max(worst_db, std::abs(drop - 20.0 * std::log10(std::exp(-6.9))));
  }
  fs::remove_all(dir);
  const double secs = Seconds(t0);
  return {m.entries.size() == 100 && balanced && identity_err <= 1e-6 && worst_db <= 3.0 &&
              secs < 60.0,
          fmt::format("N=20: {} entries (labels {}/{}/{}/{}/{}); unit-impulse max err "
                      "{:.2g}; worst decay error at RT60 {:.2f} dB (limit 3); {:.1f}s",
                      m.entries.size(), per_label[0], per_label[1], per_label[2],
                      per_label[3], per_label[4], identity_err, worst_db, secs)};
}

// ---- A7 ----

Outcome A7() {
  const auto t0 = Clock::now();
  const fs::path dir = testing::TempDir("acceptance_a7");
  testing::WriteToyClips(dir / "clean", 8, 21);
  {
    std::ofstream cfg(dir / "run.cfg");
    cfg << "# desk-scale run\n"
           "model.preset = toy\n"
           "dataset.max_frames = 64\n"
           "dataset.split_ratios = 0.75,0,0.25\n"
           "train.batch_size = 4\n"
           "train.total_steps = 2000\n"
           "train.checkpoint_every = 1000\n"
           "train.log_every = 500\n";
  }
  const std::string exe = ENVCONV_CLI_PATH;
  const fs::path log = dir / "pipeline.log";
  const std::string common =
      fmt::format("{} --config {} --log-level info", exe, (dir / "run.cfg").string());
  auto run = [&](const std::string& args) {
    const std::string cmd = fmt::format("{} {} >> {} 2>&1", common, args, log.string());
    {
      std::ofstream(log, std::ios::app) << "$ " << cmd << "\n";
    }
    return std::system(cmd.c_str());
  };
  std::vector<std::pair<std::string, int>> steps;
  auto step = [&](const std::string& name, const std::string& args) {
    const int rc = run(args);
    steps.emplace_back(name, rc);
    return rc == 0;
  };
  const fs::path corpus = dir / "corpus";
  bool ok = step("make-dataset", fmt::format("make-dataset --clean-dir {} --out-dir {}",
                                             (dir / "clean").string(), corpus.string())) &&
            step("extract-features",
                 fmt::format("extract-features --manifest {} --out-dir {}",
                             (corpus / "manifest.tsv").string(),
                             (dir / "features").string())) &&
            step("train", fmt::format("train --features {} --out-dir {}",
                                      (dir / "features").string(),
                                      (dir / "run").string()));
  std::string source, reference, truth;
  if (ok) {
    const CorpusManifest m = ReadManifest(corpus / "manifest.tsv");
    std::vector<std::string> test_clips;
    for (const auto& e : m.entries) {
      if (e.split == Split::kTest && e.environment == Environment::kClean) {
        test_clips.push_back(e.clip_id);
      }
    }
    std::sort(test_clips.begin(), test_clips.end());
    for (const auto& e : m.entries) {
      const std::string path = (corpus / e.audio_path).string();
      if (test_clips.size() < 2) break;
      if (e.clip_id == test_clips[0] && e.environment == Environment::kClean) source = path;
      if (e.clip_id == test_clips[0] && e.environment == Environment::kCave) truth = path;
      if (e.clip_id == test_clips[1] && e.environment == Environment::kCave) reference = path;
    }
    ok = !source.empty() && !reference.empty() && !truth.empty();
    if (!ok) steps.emplace_back("locate test clips", -1);
  }
  const fs::path ckpt = dir / "run" / "ckpt_final.bin";
  ok = ok &&
       step("convert", fmt::format("convert --checkpoint {} --source {} --reference {} "
                                   "--out {}",
                                   ckpt.string(), source, reference,
                                   (dir / "converted.wav").string())) &&
       step("evaluate", fmt::format("evaluate --checkpoint {} --manifest {} "
                                    "--target-env all --out {}",
                                    ckpt.string(), (corpus / "manifest.tsv").string(),
                                    (dir / "report.txt").string())) &&
       step("plot", fmt::format("plot --converted {} --truth {} --out {}",
                                (dir / "converted.wav").string(), truth,
                                (dir / "fig3.png").string()));
  int rows = 0;
  if (ok) {
    std::ifstream report(dir / "report.txt");
    std::string line;
    std::getline(report, line);
    ok = line == "target_env\tmean_mcd_db\tstd_mcd_db\tcount";
    while (std::getline(report, line) && !line.empty()) ++rows;
    ok = ok && rows == 4 && fs::file_size(dir / "fig3.png") > 0;
  }
  std::string trail;
  for (const auto& [name, rc] : steps) trail += fmt::format(" {}={}", name, rc);
  const double secs = Seconds(t0);
  ok = ok && secs < 45 * 60.0;
  if (!ok) {
    std::ifstream in(log);
    std::cout << in.rdbuf() << std::endl;
  } else {
    fs::remove_all(dir);
  }
  return {ok, fmt::format("exit codes:{}; report rows {}; {:.0f}s (limit 2700s)", trail,
                          rows, secs)};
}

// ---- A8 / A9 ----

const TrainItem* FindItem(const TrainingData& data, const std::string& clip,
                          Environment env) {
  for (const TrainItem& item : data.items) {
    if (item.clip_id == clip && item.environment == env) return &item;
  }
  return nullptr;
}

Outcome A8(EffectConversionModel& model, const ToyCorpus& corpus) {
  const TrainItem* src = FindItem(corpus.data, "clip_00", Environment::kClean);
  const TrainItem* r1 = FindItem(corpus.data, "clip_01", Environment::kCave);
  const TrainItem* r2 = FindItem(corpus.data, "clip_02", Environment::kBathroom);
  if (!src || !r1 || !r2) return {false, "fixture clips missing"};
  const MelSpectrogram a = ConvertMel(model, Unpad(src->mel), Unpad(r1->mel), 0.0);
  const MelSpectrogram b = ConvertMel(model, Unpad(src->mel), Unpad(r2->mel), 0.0);
  const bool same = a.frames.rows() == b.frames.rows() && a.frames == b.frames;
  const MelSpectrogram c = ConvertMel(model, Unpad(src->mel), Unpad(r1->mel), 1.0);
  const MelSpectrogram d = ConvertMel(model, Unpad(src->mel), Unpad(r2->mel), 1.0);
  return {same,
          fmt::format("alpha 0, references cave/clip_01 vs bathroom/clip_02: {} ({} frames); "
                      "at alpha 1 the outputs differ by max {:.3g}",
                      same ? "bit-identical" : "different", a.frame_count,
                      (c.frames - d.frames).cwiseAbs().maxCoeff())};
}

double SelfMcd(EffectConversionModel& model, const TrainItem& item) {
  const MelSpectrogram mel = Unpad(item.mel);
  const MelSpectrogram out = ConvertMel(model, mel, mel, 1.0);
  return Mcd(MelCepstraFromMel(out.frames), MelCepstraFromMel(mel.frames));
}

Outcome A9(EffectConversionModel& trained, const ToyCorpus& corpus) {
  EffectConversionModel untrained{trained.config()};
  untrained.stats() = trained.stats();
  const TrainItem* item = FindItem(corpus.data, "clip_03", Environment::kGallery);
  if (!item) return {false, "fixture clip missing"};
  const double after = SelfMcd(trained, *item);
  const double before = SelfMcd(untrained, *item);
  double mean_after = 0.0, mean_before = 0.0;
  for (const TrainItem& it : corpus.data.items) {
    mean_after += SelfMcd(trained, it) / corpus.data.items.size();
    mean_before += SelfMcd(untrained, it) / corpus.data.items.size();
  }
  return {after < before,
          fmt::format("gallery/clip_03 self-conversion MCD {:.3f} dB trained vs {:.3f} dB "
                      "untrained; all {} training items: {:.3f} vs {:.3f}",
                      after, before, corpus.data.items.size(), mean_after, mean_before)};
}

}  // namespace
}  // namespace envconv

int main(int argc, char** argv) {
  using namespace envconv;
  std::set<std::string> only;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--only") {
      std::stringstream ss(argv[i + 1]);
      std::string id;
      while (std::getline(ss, id, ',')) only.insert(id);
    }
  }
  auto want = [&](const std::string& id) { return only.empty() || only.count(id); };
  spdlog::set_level(spdlog::level::warn);

  auto guarded = [](const std::string& id, auto&& fn) {
    try {
      Report(id, fn());
    } catch (const std::exception& e) {
      Report(id, {false, fmt::format("exception: {}", e.what())});
    }
  };

  if (want("A1")) guarded("A1", [] { return A1(); });
  if (want("A2")) guarded("A2", [] { return A2(); });

  const bool need_toy = want("A3") || want("A4") || want("A8") || want("A9");
  std::optional<ToyCorpus> corpus;
  std::unique_ptr<EffectConversionModel> overfit;
  if (need_toy) corpus = BuildToyCorpus();
  if (want("A3") || want("A8") || want("A9")) {
    Outcome a3;
    try {
      a3 = A3(*corpus, overfit);
    } catch (const std::exception& e) {
      a3 = {false, fmt::format("exception: {}", e.what())};
    }
    if (want("A3")) Report("A3", a3);
  }
  if (want("A4")) guarded("A4", [&] { return A4(*corpus); });
  if (want("A5")) guarded("A5", [] { return A5(); });
  if (want("A6")) guarded("A6", [] { return A6(); });
  if (want("A7")) guarded("A7", [] { return A7(); });
  if (want("A8")) {
    guarded("A8", [&] {
      return overfit ? A8(*overfit, *corpus) : Outcome{false, "no A3 model"};
    });
  }
  if (want("A9")) {
    guarded("A9", [&] {
      return overfit ? A9(*overfit, *corpus) : Outcome{false, "no A3 model"};
    });
  }
  if (corpus) fs::remove_all(corpus->dir);
  std::cout << (failures == 0 ? "ALL PASS" : fmt::format("{} FAILED", failures))
            << std::endl;
  return failures == 0 ? 0 : 1;
}
