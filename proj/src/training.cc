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

#include "envconv/training.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "envconv/checkpoint.h"

namespace envconv {
namespace {

namespace fs = std::filesystem;

double Uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

int UniformIndex(std::mt19937_64& rng, int n) {
  return static_cast<int>(rng() % static_cast<uint64_t>(n));
}

Matrix RowWeights(const std::vector<bool>& mask, int cols) {
  Matrix w(static_cast<int>(mask.size()), cols);
  for (size_t r = 0; r < mask.size(); ++r) w.row(r).setConstant(mask[r] ? 1.0 : 0.0);
  return w;
}

std::string RngState(const std::mt19937_64& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Data

TrainingData BuildTrainingData(const std::vector<FeatureRecord>& records,
                               int max_frames) {
  if (records.empty()) throw Error("training data: no records");
  TrainingData data;
  data.max_frames = max_frames;
  data.items.reserve(records.size());
  for (const FeatureRecord& r : records) {
    TrainItem item{r.clip_id, r.environment, r.mel, r.prosody};
    if (item.mel.frame_count > max_frames) {
      throw Error(fmt::format("training data: {} ({}) has {} frames, limit {}",
                              r.clip_id, EnvironmentName(r.environment),
                              item.mel.frame_count, max_frames));
    }
    PadToMax(item.mel, item.prosody, max_frames);
    data.by_environment[EnvironmentIndex(r.environment)].push_back(
        static_cast<int>(data.items.size()));
    data.items.push_back(std::move(item));
  }
  return data;
}

std::vector<FeatureRecord> SelectSplit(const FeatureSet& set, Split split) {
  std::vector<FeatureRecord> out;
  for (size_t i = 0; i < set.index.size(); ++i) {
    if (set.index[i].split == split) out.push_back(set.records[i]);
  }
  return out;
}

TrainBatch MakeBatch(const TrainingData& data, int batch_size, std::mt19937_64& rng,
                     double self_probability, bool self_only) {
  if (batch_size <= 0) throw Error("batch size must be positive");
  if (data.items.empty()) throw Error("make batch: no training items");
  TrainBatch batch;
  std::vector<const Matrix*> xs, ys;
  std::vector<const std::vector<bool>*> xm, ym;
  for (int b = 0; b < batch_size; ++b) {
    const int src = UniformIndex(rng, static_cast<int>(data.items.size()));
    const double u = Uniform01(rng);
    const TrainItem& s = data.items[src];
    const int env = EnvironmentIndex(s.environment);
    PairKind kind = (self_only || u < self_probability) ? PairKind::kSelf
                                                        : PairKind::kSameEnv;
    int ref = src;
    if (kind == PairKind::kSameEnv) {
      const auto& pool = data.by_environment[env];
      if (pool.size() < 2) {
        kind = PairKind::kSelf;
        if (!data.fallback_logged[env]) {
          data.fallback_logged[env] = true;
          spdlog::info("environment {} has a single clip; same-environment pairs "
                       "fall back to self pairs",
                       EnvironmentName(s.environment));
        }
      } else {
        // Uniform over the other clips of the environment.
        int pick = UniformIndex(rng, static_cast<int>(pool.size()) - 1);
        const int self_pos =
            static_cast<int>(std::find(pool.begin(), pool.end(), src) - pool.begin());
        if (pick >= self_pos) ++pick;
        ref = pool[pick];
      }
    }
    const TrainItem& r = data.items[ref];
    xs.push_back(&s.mel.frames);
    xm.push_back(&s.mel.pad_mask);
    ys.push_back(&r.mel.frames);
    ym.push_back(&r.mel.pad_mask);
    batch.pitch.insert(batch.pitch.end(), s.prosody.pitch.begin(), s.prosody.pitch.end());
    batch.energy.insert(batch.energy.end(), s.prosody.energy.begin(),
                        s.prosody.energy.end());
    batch.x_ef.push_back(env);
    batch.y_ef.push_back(EnvironmentIndex(r.environment));
    batch.kinds.push_back(kind);
    batch.source_items.push_back(src);
    batch.reference_items.push_back(ref);
  }
  batch.x = StackMels(xs, xm);
  batch.y = StackMels(ys, ym);
  return batch;
}

VarianceStats FitStats(const TrainingData& data) {
  VarianceStats s;
  const int n_mels = static_cast<int>(data.items.front().mel.frames.cols());
  std::vector<double> sum(n_mels, 0.0), sum2(n_mels, 0.0);
  double frames = 0.0;
  double lf_sum = 0.0, lf_sum2 = 0.0, lf_n = 0.0;
  double e_sum = 0.0, e_sum2 = 0.0;
  for (const TrainItem& item : data.items) {
    for (int t = 0; t < item.mel.rows(); ++t) {
      if (!item.mel.pad_mask[t]) continue;
      frames += 1.0;
      for (int c = 0; c < n_mels; ++c) {
        const double v = item.mel.frames(t, c);
        sum[c] += v;
        sum2[c] += v * v;
      }
      const double e = item.prosody.energy[t];
      e_sum += e;
      e_sum2 += e * e;
      const double f0 = item.prosody.pitch[t];
      if (f0 > 0.0) {
        const double lf = std::log(f0);
        lf_sum += lf;
        lf_sum2 += lf * lf;
        lf_n += 1.0;
      }
    }
  }
  if (frames == 0.0) throw Error("fit stats: no valid frames");
  auto stddev = [](double s1, double s2, double n) {
    return std::sqrt(std::max(s2 / n - (s1 / n) * (s1 / n), 0.0));
  };
  s.mel_mean.resize(n_mels);
  s.mel_std.resize(n_mels);
  for (int c = 0; c < n_mels; ++c) {
    s.mel_mean[c] = sum[c] / frames;
    s.mel_std[c] = std::max(stddev(sum[c], sum2[c], frames), 1e-3);
  }
  if (lf_n > 1.0) {
    s.log_f0_mean = lf_sum / lf_n;
    s.log_f0_std = std::max(stddev(lf_sum, lf_sum2, lf_n), 1e-3);
  }
  s.energy_mean = e_sum / frames;
  s.energy_std = std::max(stddev(e_sum, e_sum2, frames), 1e-6);
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (const TrainItem& item : data.items) {
    for (int t = 0; t < item.mel.rows(); ++t) {
      if (!item.mel.pad_mask[t]) continue;
      const double z = (item.prosody.energy[t] - s.energy_mean) / s.energy_std;
      lo = first ? z : std::min(lo, z);
      hi = first ? z : std::max(hi, z);
      first = false;
    }
  }
  s.energy_min = lo;
  s.energy_max = hi > lo ? hi : lo + 1.0;
  return s;
}

// ---------------------------------------------------------------------------
// Losses

double TotalLoss(const LossValues& v, const LossWeights& w) {
  const std::pair<const char*, double> parts[] = {
      {"recon", v.recon},   {"pitch", v.pitch},           {"energy", v.energy},
      {"advC", v.adv_content}, {"advE", v.adv_effect}};
  for (const auto& [name, value] : parts) {
    if (std::isnan(value)) throw Error(fmt::format("loss component {} is NaN", name));
  }
  return w.recon * v.recon + w.pitch * v.pitch + w.energy * v.energy +
         w.adv_content * v.adv_content + w.adv_effect * v.adv_effect;
}

nn::Var LossRecon(nn::Var prediction, const Matrix& target,
                  const std::vector<bool>& mask) {
  if (target.rows() != prediction.rows() || target.cols() != prediction.cols() ||
      static_cast<int>(mask.size()) != prediction.rows()) {
    throw Error("recon loss: shape mismatch");
  }
  return nn::WeightedMse(prediction, target, RowWeights(mask, prediction.cols()));
}

nn::Var LossPitch(nn::Var prediction, const std::vector<double>& pitch_hz,
                  const std::vector<bool>& mask, const VarianceStats& stats) {
  const int n = prediction.rows();
  if (static_cast<int>(pitch_hz.size()) != n || static_cast<int>(mask.size()) != n) {
    throw Error("pitch loss: shape mismatch");
  }
  Matrix target = Matrix::Zero(n, 1), w = Matrix::Zero(n, 1);
  for (int r = 0; r < n; ++r) {
    if (mask[r] && pitch_hz[r] > 0.0) {
      target(r, 0) = (std::log(pitch_hz[r]) - stats.log_f0_mean) / stats.log_f0_std;
      w(r, 0) = 1.0;
    }
  }
  return nn::WeightedMse(prediction, target, w);
}

nn::Var LossEnergy(nn::Var prediction, const std::vector<double>& energy,
                   const std::vector<bool>& mask, const VarianceStats& stats) {
  const int n = prediction.rows();
  if (static_cast<int>(energy.size()) != n || static_cast<int>(mask.size()) != n) {
    throw Error("energy loss: shape mismatch");
  }
  Matrix target = Matrix::Zero(n, 1);
  for (int r = 0; r < n; ++r) {
    if (mask[r]) target(r, 0) = (energy[r] - stats.energy_mean) / stats.energy_std;
  }
  return nn::WeightedMse(prediction, target, RowWeights(mask, 1));
}

std::vector<double> NonTargetScales(const std::vector<int>& labels,
                                    const std::vector<int>& targets, int time) {
  if (labels.size() != targets.size()) throw Error("non-target scales: size mismatch");
  std::vector<double> scales;
  scales.reserve(labels.size() * time);
  for (size_t b = 0; b < labels.size(); ++b) {
    scales.insert(scales.end(), time, labels[b] == targets[b] ? 1.0 : -1.0);
  }
  return scales;
}

nn::Var LossAdvContent(EffectConversionModel& model, nn::Tape& tape, nn::Var content,
                       const MelBatch& x, const std::vector<int>& labels,
                       bool reverse) {
  nn::Var h = content;
  if (reverse) h = nn::GradScaleRows(h, std::vector<double>(x.shape.rows(), -1.0));
  return nn::SoftmaxCrossEntropy(
      model.Classify(tape, h, x.shape, x.mask, ClassifierSide::kContent), labels);
}

nn::Var LossAdvEffect(EffectConversionModel& model, nn::Tape& tape,
                      nn::Var effect_spectrum, const MelBatch& y,
                      const std::vector<int>& labels, const std::vector<int>& targets,
                      bool reverse) {
  nn::Var h = effect_spectrum;
  if (reverse) h = nn::GradScaleRows(h, NonTargetScales(labels, targets, y.shape.time));
  return nn::SoftmaxCrossEntropy(
      model.Classify(tape, h, y.shape, y.mask, ClassifierSide::kEffect), labels);
}

StepLosses ComputeLosses(EffectConversionModel& model, nn::Tape& tape,
                         const TrainBatch& batch, const ForwardOptions& options,
                         bool gradient_reversal) {
  ForwardOptions o = options;
  o.pitch_target = &batch.pitch;
  o.energy_target = &batch.energy;
  const ForwardResult f = model.Forward(tape, batch.x, batch.y, o);
  StepLosses l;
  l.recon = LossRecon(f.mel, batch.x.frames, batch.x.mask);
  l.pitch = LossPitch(f.variance.pitch_pred, batch.pitch, batch.x.mask, model.stats());
  l.energy =
      LossEnergy(f.variance.energy_pred, batch.energy, batch.x.mask, model.stats());
  l.adv_content =
      LossAdvContent(model, tape, f.content, batch.x, batch.x_ef, gradient_reversal);
  l.adv_effect = LossAdvEffect(model, tape, f.effect_spectrum, batch.y, batch.y_ef,
                               batch.y_ef, gradient_reversal);
  l.values = {l.recon.scalar(), l.pitch.scalar(), l.energy.scalar(),
              l.adv_content.scalar(), l.adv_effect.scalar()};
  return l;
}

nn::Var CombineLosses(const StepLosses& l, const LossWeights& w,
                      const std::array<bool, 5>& active) {
  const std::array<std::pair<nn::Var, double>, 5> terms = {
      std::pair{l.recon, w.recon}, std::pair{l.pitch, w.pitch},
      std::pair{l.energy, w.energy}, std::pair{l.adv_content, w.adv_content},
      std::pair{l.adv_effect, w.adv_effect}};
  std::vector<nn::Var> parts;
  for (size_t i = 0; i < terms.size(); ++i) {
    if (active[i]) parts.push_back(nn::ScaleScalar(terms[i].first, terms[i].second));
  }
  if (parts.empty()) throw Error("no active loss terms");
  return nn::SumScalars(parts);
}

// ---------------------------------------------------------------------------
// Optimizer

void AdamStep(const std::vector<nn::Parameter*>& params, double lr,
              const AdamOptions& o) {
  for (nn::Parameter* p : params) {
    if (!p->trainable) continue;
    ++p->adam_steps;
    const double t = static_cast<double>(p->adam_steps);
    const double c1 = 1.0 - std::pow(o.beta1, t);
    const double c2 = 1.0 - std::pow(o.beta2, t);
    p->m = o.beta1 * p->m + (1.0 - o.beta1) * p->grad;
    p->v = o.beta2 * p->v + (1.0 - o.beta2) * p->grad.cwiseProduct(p->grad);
    p->value.array() -=
        lr * (p->m.array() / c1) / ((p->v.array() / c2).sqrt() + o.eps);
  }
}

double NoamRate(int64_t step, int d_model, int warmup_steps) {
  const double s = static_cast<double>(std::max<int64_t>(step, 1));
  return std::pow(d_model, -0.5) *
         std::min(std::pow(s, -0.5), s * std::pow(warmup_steps, -1.5));
}

// ---------------------------------------------------------------------------
// Configuration

void TrainConfig::Validate() const {
  if (batch_size <= 0) throw Error("train config: batch_size must be positive");
  if (total_steps <= 0) throw Error("train config: total_steps must be positive");
  if (checkpoint_every <= 0) {
    throw Error("train config: checkpoint_every must be positive");
  }
  if (!(adam_beta1 > 0 && adam_beta1 < 1) || !(adam_beta2 > 0 && adam_beta2 < 1)) {
    throw Error("train config: Adam betas must lie in (0, 1)");
  }
  if (!(adam_eps > 0)) throw Error("train config: adam_eps must be positive");
  if (!(learning_rate > 0)) throw Error("train config: learning_rate must be positive");
  if (warmup_steps <= 0) throw Error("train config: warmup_steps must be positive");
  if (phase1_fraction < 0 || phase2_fraction < 0 ||
      phase1_fraction + phase2_fraction > 1.0) {
    throw Error("train config: phase fractions must be non-negative and sum to <= 1");
  }
  if (!(self_pair_probability >= 0 && self_pair_probability <= 1)) {
    throw Error("train config: self_pair_probability must lie in [0, 1]");
  }
  if (log_every <= 0) throw Error("train config: log_every must be positive");
}

KeyValues TrainConfig::ToKeyValues() const {
  auto num = [](double v) { return fmt::format("{:.17g}", v); };
  KeyValues kv;
  kv["train.batch_size"] = std::to_string(batch_size);
  kv["train.total_steps"] = std::to_string(total_steps);
  kv["train.checkpoint_every"] = std::to_string(checkpoint_every);
  kv["train.adam_beta1"] = num(adam_beta1);
  kv["train.adam_beta2"] = num(adam_beta2);
  kv["train.adam_eps"] = num(adam_eps);
  kv["train.learning_rate"] = num(learning_rate);
  kv["train.noam"] = noam ? "true" : "false";
  kv["train.warmup_steps"] = std::to_string(warmup_steps);
  kv["train.phase1_fraction"] = num(phase1_fraction);
  kv["train.phase2_fraction"] = num(phase2_fraction);
  kv["train.strict_freeze"] = strict_freeze ? "true" : "false";
  kv["train.self_pair_probability"] = num(self_pair_probability);
  kv["train.weight_recon"] = num(weights.recon);
  kv["train.weight_pitch"] = num(weights.pitch);
  kv["train.weight_energy"] = num(weights.energy);
  kv["train.weight_adv_content"] = num(weights.adv_content);
  kv["train.weight_adv_effect"] = num(weights.adv_effect);
  kv["train.seed"] = std::to_string(seed);
  kv["train.log_every"] = std::to_string(log_every);
  return kv;
}

void ApplyTrainKeys(const KeyValues& kv, TrainConfig& c, bool allow_unknown) {
  const std::map<std::string, double*> doubles = {
      {"train.adam_beta1", &c.adam_beta1},
      {"train.adam_beta2", &c.adam_beta2},
      {"train.adam_eps", &c.adam_eps},
      {"train.learning_rate", &c.learning_rate},
      {"train.phase1_fraction", &c.phase1_fraction},
      {"train.phase2_fraction", &c.phase2_fraction},
      {"train.self_pair_probability", &c.self_pair_probability},
      {"train.weight_recon", &c.weights.recon},
      {"train.weight_pitch", &c.weights.pitch},
      {"train.weight_energy", &c.weights.energy},
      {"train.weight_adv_content", &c.weights.adv_content},
      {"train.weight_adv_effect", &c.weights.adv_effect},
  };
  for (const auto& [key, value] : kv) {
    if (auto it = doubles.find(key); it != doubles.end()) {
      *it->second = ParseDoubleValue(key, value);
    } else if (key == "train.batch_size") {
      c.batch_size = ParseIntValue(key, value);
    } else if (key == "train.total_steps") {
      c.total_steps = ParseIntValue(key, value);
    } else if (key == "train.checkpoint_every") {
      c.checkpoint_every = ParseIntValue(key, value);
    } else if (key == "train.warmup_steps") {
      c.warmup_steps = ParseIntValue(key, value);
    } else if (key == "train.log_every") {
      c.log_every = ParseIntValue(key, value);
    } else if (key == "train.noam") {
      c.noam = ParseBoolValue(key, value);
    } else if (key == "train.strict_freeze") {
      c.strict_freeze = ParseBoolValue(key, value);
    } else if (key == "train.seed") {
      c.seed = std::stoull(value);
    } else if (key.rfind("train.", 0) == 0 || !allow_unknown) {
      throw Error(fmt::format("unknown config key {}", key));
    }
  }
}

int PhaseAt(int64_t step, const TrainConfig& c) {
  const auto p1 = static_cast<int64_t>(std::llround(c.total_steps * c.phase1_fraction));
  const auto p2 =
      p1 + static_cast<int64_t>(std::llround(c.total_steps * c.phase2_fraction));
  if (step <= p1) return 1;
  if (step <= p2) return 2;
  return 3;
}

std::vector<std::string> PhaseModules(int phase, bool strict_freeze) {
  const std::vector<std::string> reconstruction = {
      modules::kEncoder, modules::kEffectExtractor, modules::kEffectEncoder,
      modules::kDecoder};
  const std::vector<std::string> classifiers = {modules::kContentClassifier,
                                                modules::kEffectClassifier};
  switch (phase) {
    case 1:
      return reconstruction;
    case 2: {
      if (strict_freeze) return classifiers;
      auto all = reconstruction;
      all.insert(all.end(), classifiers.begin(), classifiers.end());
      return all;
    }
    case 3: {
      auto all = reconstruction;
      all.insert(all.end(), classifiers.begin(), classifiers.end());
      all.push_back(modules::kVariance);
      return all;
    }
    default:
      throw Error(fmt::format("no training phase {}", phase));
  }
}

std::string FormatStepLog(const StepRecord& r) {
  return fmt::format(
      "step={} phase={} recon={:.6g} pitch={:.6g} energy={:.6g} advC={:.6g} "
      "advE={:.6g} total={:.6g} lr={:.6g}",
      r.step, r.phase, r.losses.recon, r.losses.pitch, r.losses.energy,
      r.losses.adv_content, r.losses.adv_effect, r.total, r.learning_rate);
}

// ---------------------------------------------------------------------------
// Training loop

TrainResult Train(const TrainConfig& config, const ModelConfig& model_config,
                  const TrainingData& data, const TrainOptions& options) {
  config.Validate();
  if (data.max_frames != model_config.max_frames) {
    throw Error(fmt::format("training data padded to {} frames, model expects {}",
                            data.max_frames, model_config.max_frames));
  }
  TrainResult result;
  std::mt19937_64 rng(config.seed);
  int64_t start = 0;
  if (!options.resume.empty()) {
    LoadedCheckpoint ck = LoadCheckpoint(options.resume);
    if (ck.model->config().Serialize() != model_config.Serialize()) {
      throw Error(fmt::format("{}: model configuration differs from the run",
                              options.resume.string()));
    }
    result.model = std::move(ck.model);
    start = ck.meta.step;
    if (!ck.meta.rng_state.empty()) {
      std::istringstream in(ck.meta.rng_state);
      in >> rng;
      if (!in) throw Error("checkpoint holds a malformed generator state");
    }
    spdlog::info("resuming from {} at step {}", options.resume.string(), start);
  } else {
    result.model = std::make_unique<EffectConversionModel>(model_config);
    result.model->stats() = FitStats(data);
  }
  EffectConversionModel& model = *result.model;

  std::ofstream log;
  if (!options.out_dir.empty()) {
    fs::create_directories(options.out_dir);
    log.open(options.out_dir / "train.log", start > 0 ? std::ios::app : std::ios::trunc);
    if (!log) throw Error("cannot open training log");
  }
  const std::string config_text =
      FormatKeyValues(config.ToKeyValues()) + model_config.Serialize();
  auto save = [&](const std::string& name, int64_t step) {
    if (options.out_dir.empty()) return;
    const fs::path path = options.out_dir / name;
    SaveCheckpoint(path, model, {step, config_text, RngState(rng)});
    result.checkpoints.push_back(path);
    spdlog::info("saved {}", path.string());
  };

  const AdamOptions adam{config.adam_beta1, config.adam_beta2, config.adam_eps};
  const auto t0 = std::chrono::steady_clock::now();
  for (int64_t step = start + 1; step <= config.total_steps; ++step) {
    const int phase = PhaseAt(step, config);
    const TrainBatch batch = MakeBatch(data, config.batch_size, rng,
                                       config.self_pair_probability, phase == 1);
    model.params().ZeroGrad();
    nn::Tape tape;
    ForwardOptions fo;
    fo.batch_norm_training = true;
    const StepLosses losses = ComputeLosses(model, tape, batch, fo);

    StepRecord rec;
    rec.step = step;
    rec.phase = phase;
    rec.losses = losses.values;
    std::array<bool, 5> active{true, false, false, false, false};
    if (phase >= 2) active[3] = active[4] = true;
    if (phase == 3) active[1] = active[2] = true;
    LossWeights w = config.weights;
    if (!active[1]) w.pitch = 0.0;
    if (!active[2]) w.energy = 0.0;
    if (!active[3]) w.adv_content = 0.0;
    if (!active[4]) w.adv_effect = 0.0;
    try {
      rec.total = TotalLoss(rec.losses, w);
    } catch (const Error& e) {
      throw Error(fmt::format("step {}: {}", step, e.what()));
    }
    if (!std::isfinite(rec.total)) {
      throw Error(fmt::format("step {}: total loss is not finite", step));
    }
    tape.Backward(CombineLosses(losses, config.weights, active));

    std::vector<nn::Parameter*> params;
    for (const auto& prefix : PhaseModules(phase, config.strict_freeze)) {
      const auto group = model.params().WithPrefix(prefix);
      params.insert(params.end(), group.begin(), group.end());
    }
    rec.learning_rate = config.noam
                            ? NoamRate(step, model_config.d_model, config.warmup_steps)
                            : config.learning_rate;
    AdamStep(params, rec.learning_rate, adam);

    if (log.is_open()) log << FormatStepLog(rec) << '\n';
    if (step % config.log_every == 0 || step == config.total_steps) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      spdlog::info("{} ({:.1f}s)", FormatStepLog(rec), secs);
    }
    if (options.on_step) options.on_step(rec);
    result.history.push_back(rec);
    if (step % config.checkpoint_every == 0) {
      if (log.is_open()) log.flush();
      save(fmt::format("ckpt_{}.bin", step), step);
    }
  }
  if (log.is_open()) {
    log.flush();
    if (!log) throw Error("training log write failed");
  }
  save("ckpt_final.bin", std::max<int64_t>(config.total_steps, start));
  return result;
}

double ClassifierAccuracy(EffectConversionModel& model, const TrainingData& data,
                          ClassifierSide side, int batch_size) {
  if (data.items.empty()) throw Error("classifier accuracy: no items");
  int correct = 0;
  const int n = static_cast<int>(data.items.size());
  for (int first = 0; first < n; first += batch_size) {
    const int last = std::min(n, first + batch_size);
    std::vector<const Matrix*> frames;
    std::vector<const std::vector<bool>*> masks;
    for (int i = first; i < last; ++i) {
      frames.push_back(&data.items[i].mel.frames);
      masks.push_back(&data.items[i].mel.pad_mask);
    }
    const MelBatch batch = StackMels(frames, masks);
    nn::Tape tape(/*record=*/false);
    ForwardOptions fo;
    const ForwardResult f = model.Forward(tape, batch, batch, fo);
    const nn::Var latent = side == ClassifierSide::kContent ? f.content
                                                            : f.effect_spectrum;
    const Matrix logits =
        model.Classify(tape, latent, batch.shape, batch.mask, side).value();
    for (int b = 0; b < last - first; ++b) {
      Eigen::Index arg = 0;
      logits.row(b).maxCoeff(&arg);
      if (static_cast<int>(arg) == EnvironmentIndex(data.items[first + b].environment)) {
        ++correct;
      }
    }
  }
  return static_cast<double>(correct) / n;
}

}  // namespace envconv
