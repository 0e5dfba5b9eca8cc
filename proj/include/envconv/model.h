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

// Environment-effect conversion network.
//
//   mel = Dec(Enc(x) + EffEnc(alpha * EE(y)) + Var(Enc(x)))
//
// Enc is a convolutional mel encoder, EE a 1-D U-Net effect extractor,
// EffEnc a single convolution, Var a pitch/energy variance adaptor and Dec a
// feed-forward transformer. Two environment classifiers read Enc(x) and EE(y)
// through gradient reversal during training.

#ifndef ENVCONV_MODEL_H_
#define ENVCONV_MODEL_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "envconv/autograd.h"
#include "envconv/common.h"

namespace envconv {

struct ModelConfig {
  int n_mels = 80;
  int max_frames = 1200;
  int d_model = 256;
  int encoder_layers = 3;
  int encoder_kernel = 5;
  int decoder_layers = 4;
  int decoder_heads = 2;
  int decoder_filter = 1024;
  int decoder_kernel = 9;
  int unet_depth = 4;
  int unet_channels = 64;
  int unet_max_channels = 512;
  int effect_encoder_kernel = 3;
  int predictor_filter = 256;
  int predictor_kernel = 3;
  int classifier_channels = 256;
  int classifier_kernel = 3;
  int pitch_bins = 256;
  int energy_bins = 256;
  uint64_t init_seed = 1;

  // Throws envconv::Error describing the first invalid field.
  void Validate() const;
  // Canonical "key=value" lines, sorted by key.
  std::string Serialize() const;
  static ModelConfig Deserialize(const std::string& text);
  // Small network for gradient checks: d_model 8, 16 frames.
  static ModelConfig Micro();
  // Desk-scale network for toy-corpus training.
  static ModelConfig Toy();
};

// Per-corpus normalization constants, fitted on the training split.
// The network sees standardized mels and predicts standardized mels that are
// mapped back with the same per-channel mean/std. Pitch targets are
// standardized log-F0 on voiced frames; energy targets are standardized
// energies. The energy embedding uses linear bins over [energy_min,
// energy_max] in the standardized domain.
struct VarianceStats {
  std::vector<double> mel_mean;  // empty means identity
  std::vector<double> mel_std;
  double log_f0_mean = 5.0;
  double log_f0_std = 0.3;
  double energy_mean = 0.0;
  double energy_std = 1.0;
  double energy_min = -3.0;
  double energy_max = 3.0;

  std::string Serialize() const;
  static VarianceStats Deserialize(const std::string& text);
};

// Parameter-name prefixes of the trainable submodules.
namespace modules {
inline constexpr const char* kEncoder = "encoder.";
inline constexpr const char* kEffectExtractor = "effect_extractor.";
inline constexpr const char* kEffectEncoder = "effect_encoder.";
inline constexpr const char* kVariance = "variance.";
inline constexpr const char* kDecoder = "decoder.";
inline constexpr const char* kContentClassifier = "classifier_content.";
inline constexpr const char* kEffectClassifier = "classifier_effect.";
}  // namespace modules

enum class ClassifierSide { kContent, kEffect };

// Padded batch of mel spectrograms stacked sample-major.
struct MelBatch {
  Matrix frames;            // (batch * time) x n_mels
  std::vector<bool> mask;   // one entry per row
  nn::SeqShape shape;
};

struct VarianceOutput {
  nn::Var pitch_pred;   // rows x 1, standardized log-F0
  nn::Var energy_pred;  // rows x 1, standardized energy
  nn::Var embedding;    // rows x d_model
};

struct ForwardOptions {
  double alpha = 1.0;
  // Batch norm in the U-Net uses batch statistics when true.
  bool batch_norm_training = false;
  // Optional: time length at every U-Net stage.
  std::vector<int>* unet_trace = nullptr;
  // Training: per-row ground-truth pitch (Hz, 0 unvoiced) and energy. When
  // set, the variance embedding quantizes these instead of the predictions.
  const std::vector<double>* pitch_target = nullptr;
  const std::vector<double>* energy_target = nullptr;
};

struct ForwardResult {
  nn::Var content;          // Enc(x)
  nn::Var effect_spectrum;  // EE(y)
  nn::Var condition;        // EffEnc(alpha * EE(y))
  VarianceOutput variance;  // Var(Enc(x))
  nn::Var mel;              // decoder output
};

class EffectConversionModel {
 public:
  explicit EffectConversionModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }
  VarianceStats& stats() { return stats_; }
  const VarianceStats& stats() const { return stats_; }

  nn::Var MelEncoder(nn::Tape& tape, nn::Var x, const nn::SeqShape& shape,
                     const std::vector<bool>& mask);
  nn::Var EffectExtractor(nn::Tape& tape, nn::Var y, const nn::SeqShape& shape,
                          const std::vector<bool>& mask,
                          bool batch_norm_training,
                          std::vector<int>* trace = nullptr);
  // alpha must lie in [0, 2].
  nn::Var EffectEncoder(nn::Tape& tape, nn::Var effect_spectrum, double alpha,
                        const nn::SeqShape& shape);
  // Targets as in ForwardOptions; null selects the predictions.
  VarianceOutput VarianceAdaptor(nn::Tape& tape, nn::Var content,
                                 const nn::SeqShape& shape,
                                 const std::vector<bool>& mask,
                                 const std::vector<double>* pitch_target = nullptr,
                                 const std::vector<double>* energy_target = nullptr);
  nn::Var MelDecoder(nn::Tape& tape, nn::Var latent, const nn::SeqShape& shape,
                     const std::vector<bool>& mask);
  // Per-utterance logits (batch x 5).
  nn::Var Classify(nn::Tape& tape, nn::Var latent, const nn::SeqShape& shape,
                   const std::vector<bool>& mask, ClassifierSide side);

  // Full conversion path for source batch x and reference batch y.
  ForwardResult Forward(nn::Tape& tape, const MelBatch& x, const MelBatch& y,
                        const ForwardOptions& options);

  // Bucket indices used by the variance embeddings.
  int PitchBucket(double standardized_log_f0) const;
  int EnergyBucket(double standardized_energy) const;

 private:
  nn::Var P(nn::Tape& tape, const std::string& name);
  void Build();
  void AddConv(const std::string& name, int kernel, int c_in, int c_out);
  void AddLinear(const std::string& name, int c_in, int c_out);
  void AddNorm(const std::string& name, int channels);
  void AddBatchNorm(const std::string& name, int channels);
  nn::Var ConvBnRelu(nn::Tape& tape, const std::string& name, nn::Var x,
                     const nn::SeqShape& shape, bool bn_training);
  nn::Var UnetBlock(nn::Tape& tape, const std::string& name, nn::Var x,
                    const nn::SeqShape& shape, bool bn_training);
  nn::Var Predictor(nn::Tape& tape, const std::string& name, nn::Var h,
                    const nn::SeqShape& shape, const std::vector<bool>& mask);
  int UnetChannels(int level) const;

  ModelConfig config_;
  VarianceStats stats_;
  nn::ParameterStore params_;
  std::mt19937_64 init_rng_;
};

// Stacks padded spectrograms (each rows == time) into a MelBatch.
MelBatch StackMels(const std::vector<const Matrix*>& frames,
                   const std::vector<const std::vector<bool>*>& masks);

// Expected U-Net time trace for a given input length and depth:
// T, T/2, ..., T/2^depth, ..., T/2, T.
std::vector<int> UnetTimeTrace(int time, int depth);

// Mask as 0/1 row weights.
std::vector<double> MaskWeights(const std::vector<bool>& mask);

// 64-bit FNV-1a.
uint64_t Fnv1a64(const std::string& text);

}  // namespace envconv

#endif  // ENVCONV_MODEL_H_
