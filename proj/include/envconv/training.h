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

// Losses, batch pairing, Adam and the three-phase training schedule.
//
// Phase 1 trains encoder, effect extractor, effect encoder and decoder on the
// reconstruction loss with self pairs. Phase 2 adds both classifiers and the
// two adversarial losses with mixed pairs. Phase 3 trains everything on the
// weighted sum of all five losses.

#ifndef ENVCONV_TRAINING_H_
#define ENVCONV_TRAINING_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "envconv/feature_cache.h"
#include "envconv/kv_config.h"
#include "envconv/model.h"

namespace envconv {

// ---- data ----

struct TrainItem {
  std::string clip_id;
  Environment environment = Environment::kClean;
  MelSpectrogram mel;     // padded to max_frames
  ProsodyTrack prosody;   // padded with zeros
};

struct TrainingData {
  int max_frames = 0;
  std::vector<TrainItem> items;
  std::array<std::vector<int>, kNumEnvironments> by_environment;
  // One fallback notice per environment.
  mutable std::array<bool, kNumEnvironments> fallback_logged{};
};

// Pads every record to max_frames; throws if one is longer.
TrainingData BuildTrainingData(const std::vector<FeatureRecord>& records,
                               int max_frames);
// Records of one split, in index order.
std::vector<FeatureRecord> SelectSplit(const FeatureSet& set, Split split);

enum class PairKind { kSelf, kSameEnv };

struct TrainBatch {
  MelBatch x;
  MelBatch y;
  std::vector<double> pitch;   // Hz per row of x, 0 where unvoiced or padded
  std::vector<double> energy;  // per row of x
  std::vector<int> x_ef;       // per sample
  std::vector<int> y_ef;
  std::vector<PairKind> kinds;
  std::vector<int> source_items;
  std::vector<int> reference_items;
};

// Each sample draws a uniform source clip, then pairs it with itself with
// probability self_probability or otherwise with a different clip of the same
// environment. An environment with a single clip falls back to self pairs.
TrainBatch MakeBatch(const TrainingData& data, int batch_size, std::mt19937_64& rng,
                     double self_probability = 0.5, bool self_only = false);

// Per-corpus normalization fitted on valid frames of .
VarianceStats FitStats(const TrainingData& data);

// ---- losses ----

struct LossWeights {
  double recon = 1.0;
  double pitch = 1.0;
  double energy = 1.0;
  double adv_content = 1.0;
  double adv_effect = 1.0;
};

struct LossValues {
  double recon = 0.0;
  double pitch = 0.0;
  double energy = 0.0;
  double adv_content = 0.0;
  double adv_effect = 0.0;
};

// Weighted sum; throws naming the first NaN component.
double TotalLoss(const LossValues& values, const LossWeights& weights = {});

// Masked MSE over valid frames and all channels.
nn::Var LossRecon(nn::Var prediction, const Matrix& target,
                  const std::vector<bool>& mask);
// MSE on standardized log-F0 over voiced valid frames; 0 without voiced frames.
nn::Var LossPitch(nn::Var prediction, const std::vector<double>& pitch_hz,
                  const std::vector<bool>& mask, const VarianceStats& stats);
// MSE on standardized energy over valid frames.
nn::Var LossEnergy(nn::Var prediction, const std::vector<double>& energy,
                   const std::vector<bool>& mask, const VarianceStats& stats);

// Row scales of the non-target reversal: +1 where the sample label equals its
// target, -1 otherwise.
std::vector<double> NonTargetScales(const std::vector<int>& labels,
                                    const std::vector<int>& targets, int time);

// Cross-entropy of the content classifier on Enc(x); with reverse the
// latent passes through gradient reversal.
nn::Var LossAdvContent(EffectConversionModel& model, nn::Tape& tape, nn::Var content,
                       const MelBatch& x, const std::vector<int>& labels,
                       bool reverse = true);
// Cross-entropy of the effect classifier on EE(y) through non-target reversal.
nn::Var LossAdvEffect(EffectConversionModel& model, nn::Tape& tape,
                      nn::Var effect_spectrum, const MelBatch& y,
                      const std::vector<int>& labels, const std::vector<int>& targets,
                      bool reverse = true);

struct StepLosses {
  nn::Var recon;
  nn::Var pitch;
  nn::Var energy;
  nn::Var adv_content;
  nn::Var adv_effect;
  LossValues values;
};

// Forward pass plus all five loss terms. The variance embedding is fed the
// batch's ground-truth pitch and energy. The non-target reversal uses each
// sample's own reference label as target; with gradient_reversal false both
// reversals are skipped and the backward pass is the plain gradient.
StepLosses ComputeLosses(EffectConversionModel& model, nn::Tape& tape,
                         const TrainBatch& batch, const ForwardOptions& options,
                         bool gradient_reversal = true);

// Scalar node of the weighted sum over active terms (recon, pitch, energy,
// adv_content, adv_effect).
nn::Var CombineLosses(const StepLosses& losses, const LossWeights& weights,
                      const std::array<bool, 5>& active);

// ---- optimizer ----

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

// One bias-corrected Adam update per parameter using its own step count.
void AdamStep(const std::vector<nn::Parameter*>& params, double learning_rate,
              const AdamOptions& options);

// d_model^-0.5 * min(step^-0.5, step * warmup^-1.5).
double NoamRate(int64_t step, int d_model, int warmup_steps);

// ---- schedule ----

struct TrainConfig {
  int batch_size = 16;
  int64_t total_steps = 900000;
  int64_t checkpoint_every = 10000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-9;
  double learning_rate = 1e-4;
  bool noam = false;
  int warmup_steps = 4000;
  double phase1_fraction = 0.1;
  double phase2_fraction = 0.1;
  bool strict_freeze = false;
  double self_pair_probability = 0.5;
  LossWeights weights;
  uint64_t seed = 1;
  int log_every = 100;

  void Validate() const;
  KeyValues ToKeyValues() const;
};

// Copies "train.*" keys; unknown train keys are errors, other keys are errors
// unless allow_unknown.
void ApplyTrainKeys(const KeyValues& kv, TrainConfig& config, bool allow_unknown);

// Phase (1, 2 or 3) of a 1-based step.
int PhaseAt(int64_t step, const TrainConfig& config);
// Parameter prefixes updated in a phase.
std::vector<std::string> PhaseModules(int phase, bool strict_freeze);

struct StepRecord {
  int64_t step = 0;
  int phase = 0;
  LossValues losses;
  double total = 0.0;
  double learning_rate = 0.0;
};

// "step=12 phase=1 recon=... pitch=... energy=... advC=... advE=... total=... lr=..."
std::string FormatStepLog(const StepRecord& record);

struct TrainOptions {
  // Log and checkpoints go here; empty keeps everything in memory.
  std::filesystem::path out_dir;
  // Continue from this checkpoint.
  std::filesystem::path resume;
  std::function<void(const StepRecord&)> on_step;
};

struct TrainResult {
  std::unique_ptr<EffectConversionModel> model;
  std::vector<StepRecord> history;
  std::vector<std::filesystem::path> checkpoints;
};

// Writes out_dir/train.log (one line per step), out_dir/ckpt_<step>.bin every
// checkpoint_every steps and out_dir/ckpt_final.bin.
TrainResult Train(const TrainConfig& config, const ModelConfig& model_config,
                  const TrainingData& data, const TrainOptions& options = {});

// Utterance-level accuracy of one classifier over all items, batch norm in
// inference mode. The effect side reads EE(mel) of each item.
double ClassifierAccuracy(EffectConversionModel& model, const TrainingData& data,
                          ClassifierSide side, int batch_size = 8);

}  // namespace envconv

#endif  // ENVCONV_TRAINING_H_
