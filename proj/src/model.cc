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

#include "envconv/model.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <fmt/format.h>

#include "envconv/features.h"
#include "envconv/kv_config.h"

namespace envconv {
namespace {

using nn::SeqShape;
using nn::Tape;
using nn::Var;

Matrix Zeros(int rows, int cols) { return Matrix::Zero(rows, cols); }
Matrix Ones(int rows, int cols) { return Matrix::Ones(rows, cols); }

Matrix SinusoidalPositions(int time, int d) {
  Matrix pe(time, d);
  for (int t = 0; t < time; ++t) {
    for (int i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -2.0 * (i / 2) / d);
      pe(t, i) = (i % 2 == 0) ? std::sin(t * rate) : std::cos(t * rate);
    }
  }
  return pe;
}

std::string JoinDoubles(const std::vector<double>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += fmt::format("{:.17g}", v[i]);
  }
  return out;
}

std::vector<double> ParseDoubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void ModelConfig::Validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw Error(fmt::format("model config: {} must be positive", name));
  };
  auto odd = [](int v, const char* name) {
    if (v <= 0 || v % 2 == 0) {
      throw Error(fmt::format("model config: {} must be a positive odd number", name));
    }
  };
  positive(n_mels, "n_mels");
  positive(max_frames, "max_frames");
  positive(d_model, "d_model");
  positive(encoder_layers, "encoder_layers");
  odd(encoder_kernel, "encoder_kernel");
  positive(decoder_layers, "decoder_layers");
  positive(decoder_heads, "decoder_heads");
  positive(decoder_filter, "decoder_filter");
  odd(decoder_kernel, "decoder_kernel");
  positive(unet_depth, "unet_depth");
  positive(unet_channels, "unet_channels");
  positive(unet_max_channels, "unet_max_channels");
  odd(effect_encoder_kernel, "effect_encoder_kernel");
  positive(predictor_filter, "predictor_filter");
  odd(predictor_kernel, "predictor_kernel");
  positive(classifier_channels, "classifier_channels");
  odd(classifier_kernel, "classifier_kernel");
  positive(pitch_bins, "pitch_bins");
  positive(energy_bins, "energy_bins");
  if (d_model % decoder_heads != 0) {
    throw Error("model config: d_model must be divisible by decoder_heads");
  }
  if (max_frames % (1 << unet_depth) != 0) {
    throw Error(fmt::format(
        "model config: max_frames {} must be divisible by 2^unet_depth = {}",
        max_frames, 1 << unet_depth));
  }
}

std::string ModelConfig::Serialize() const {
  KeyValues kv;
  kv["model.n_mels"] = std::to_string(n_mels);
  kv["model.max_frames"] = std::to_string(max_frames);
  kv["model.d_model"] = std::to_string(d_model);
  kv["model.encoder_layers"] = std::to_string(encoder_layers);
  kv["model.encoder_kernel"] = std::to_string(encoder_kernel);
  kv["model.decoder_layers"] = std::to_string(decoder_layers);
  kv["model.decoder_heads"] = std::to_string(decoder_heads);
  kv["model.decoder_filter"] = std::to_string(decoder_filter);
  kv["model.decoder_kernel"] = std::to_string(decoder_kernel);
  kv["model.unet_depth"] = std::to_string(unet_depth);
  kv["model.unet_channels"] = std::to_string(unet_channels);
  kv["model.unet_max_channels"] = std::to_string(unet_max_channels);
  kv["model.effect_encoder_kernel"] = std::to_string(effect_encoder_kernel);
  kv["model.predictor_filter"] = std::to_string(predictor_filter);
  kv["model.predictor_kernel"] = std::to_string(predictor_kernel);
  kv["model.classifier_channels"] = std::to_string(classifier_channels);
  kv["model.classifier_kernel"] = std::to_string(classifier_kernel);
  kv["model.pitch_bins"] = std::to_string(pitch_bins);
  kv["model.energy_bins"] = std::to_string(energy_bins);
  kv["model.init_seed"] = std::to_string(init_seed);
  return FormatKeyValues(kv);
}

ModelConfig ModelConfig::Deserialize(const std::string& text) {
  const KeyValues kv = ParseKeyValues(text, "<model config>");
  ModelConfig c;
  ApplyModelKeys(kv, c, /*allow_unknown=*/false);
  return c;
}

ModelConfig ModelConfig::Micro() {
  ModelConfig c;
  c.max_frames = 16;
  c.d_model = 8;
  c.encoder_layers = 2;
  c.encoder_kernel = 3;
  c.decoder_layers = 1;
  c.decoder_heads = 2;
  c.decoder_filter = 12;
  c.decoder_kernel = 3;
  c.unet_depth = 2;
  c.unet_channels = 4;
  c.unet_max_channels = 8;
  c.predictor_filter = 8;
  c.classifier_channels = 6;
  c.pitch_bins = 16;
  c.energy_bins = 16;
  return c;
}

ModelConfig ModelConfig::Toy() {
  ModelConfig c;
  c.max_frames = 64;
  c.d_model = 32;
  c.decoder_layers = 2;
  c.decoder_heads = 2;
  c.decoder_filter = 64;
  c.decoder_kernel = 9;
  c.unet_depth = 4;
  c.unet_channels = 8;
  c.unet_max_channels = 64;
  c.predictor_filter = 32;
  c.classifier_channels = 32;
  c.pitch_bins = 256;
  c.energy_bins = 256;
  return c;
}

std::string VarianceStats::Serialize() const {
  KeyValues kv;
  kv["stats.mel_mean"] = JoinDoubles(mel_mean);
  kv["stats.mel_std"] = JoinDoubles(mel_std);
  kv["stats.log_f0_mean"] = fmt::format("{:.17g}", log_f0_mean);
  kv["stats.log_f0_std"] = fmt::format("{:.17g}", log_f0_std);
  kv["stats.energy_mean"] = fmt::format("{:.17g}", energy_mean);
  kv["stats.energy_std"] = fmt::format("{:.17g}", energy_std);
  kv["stats.energy_min"] = fmt::format("{:.17g}", energy_min);
  kv["stats.energy_max"] = fmt::format("{:.17g}", energy_max);
  return FormatKeyValues(kv);
}

VarianceStats VarianceStats::Deserialize(const std::string& text) {
  const KeyValues kv = ParseKeyValues(text, "<stats>");
  VarianceStats s;
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw Error(fmt::format("stats: missing {}", key));
    return it->second;
  };
  s.mel_mean = ParseDoubles(get("stats.mel_mean"));
  s.mel_std = ParseDoubles(get("stats.mel_std"));
  s.log_f0_mean = std::stod(get("stats.log_f0_mean"));
  s.log_f0_std = std::stod(get("stats.log_f0_std"));
  s.energy_mean = std::stod(get("stats.energy_mean"));
  s.energy_std = std::stod(get("stats.energy_std"));
  s.energy_min = std::stod(get("stats.energy_min"));
  s.energy_max = std::stod(get("stats.energy_max"));
  return s;
}

// ---------------------------------------------------------------------------
// Construction

EffectConversionModel::EffectConversionModel(const ModelConfig& config)
    : config_(config), init_rng_(config.init_seed) {
  config_.Validate();
  Build();
}

void EffectConversionModel::AddConv(const std::string& name, int kernel,
                                    int c_in, int c_out) {
  params_.Create(name + ".w", nn::GlorotUniform(kernel * c_in, c_out, kernel * c_in,
                                                kernel * c_out, init_rng_));
  params_.Create(name + ".b", Zeros(1, c_out));
}

void EffectConversionModel::AddLinear(const std::string& name, int c_in, int c_out) {
  params_.Create(name + ".w", nn::GlorotUniform(c_in, c_out, c_in, c_out, init_rng_));
  params_.Create(name + ".b", Zeros(1, c_out));
}

void EffectConversionModel::AddNorm(const std::string& name, int channels) {
  params_.Create(name + ".gamma", Ones(1, channels));
  params_.Create(name + ".beta", Zeros(1, channels));
}

void EffectConversionModel::AddBatchNorm(const std::string& name, int channels) {
  AddNorm(name, channels);
  params_.Create(name + ".running_mean", Zeros(1, channels), /*trainable=*/false);
  params_.Create(name + ".running_var", Ones(1, channels), /*trainable=*/false);
}

int EffectConversionModel::UnetChannels(int level) const {
  return std::min(config_.unet_channels << level, config_.unet_max_channels);
}

void EffectConversionModel::Build() {
  const ModelConfig& c = config_;
  const int d = c.d_model;

  for (int i = 0; i < c.encoder_layers; ++i) {
    const std::string base = fmt::format("{}layer{}", modules::kEncoder, i);
    AddConv(base + ".conv", c.encoder_kernel, i == 0 ? c.n_mels : d, d);
    AddNorm(base + ".norm", d);
  }

  auto add_block = [&](const std::string& base, int c_in, int c_out) {
    AddConv(base + ".conv0", 3, c_in, c_out);
    AddBatchNorm(base + ".bn0", c_out);
    AddConv(base + ".conv1", 3, c_out, c_out);
    AddBatchNorm(base + ".bn1", c_out);
  };
  const std::string ee = modules::kEffectExtractor;
  for (int i = 0; i < c.unet_depth; ++i) {
    add_block(fmt::format("{}down{}", ee, i), i == 0 ? c.n_mels : UnetChannels(i - 1),
              UnetChannels(i));
  }
  add_block(ee + "bottom", UnetChannels(c.unet_depth - 1), UnetChannels(c.unet_depth));
  for (int i = c.unet_depth - 1; i >= 0; --i) {
    const std::string base = fmt::format("{}up{}", ee, i);
    AddConv(base + ".tconv", 2, UnetChannels(i + 1), UnetChannels(i));
    add_block(base, 2 * UnetChannels(i), UnetChannels(i));
  }
  AddConv(ee + "out", 1, UnetChannels(0), c.n_mels);

  AddConv(std::string(modules::kEffectEncoder) + "conv", c.effect_encoder_kernel,
          c.n_mels, d);

  for (const char* which : {"pitch", "energy"}) {
    const std::string base = fmt::format("{}{}", modules::kVariance, which);
    AddConv(base + ".conv0", c.predictor_kernel, d, c.predictor_filter);
    AddNorm(base + ".norm0", c.predictor_filter);
    AddConv(base + ".conv1", c.predictor_kernel, c.predictor_filter, c.predictor_filter);
    AddNorm(base + ".norm1", c.predictor_filter);
    AddLinear(base + ".out", c.predictor_filter, 1);
  }
  params_.Create(std::string(modules::kVariance) + "pitch_embedding",
                 nn::GlorotUniform(c.pitch_bins, d, c.pitch_bins, d, init_rng_));
  params_.Create(std::string(modules::kVariance) + "energy_embedding",
                 nn::GlorotUniform(c.energy_bins, d, c.energy_bins, d, init_rng_));

  for (int i = 0; i < c.decoder_layers; ++i) {
    const std::string base = fmt::format("{}block{}", modules::kDecoder, i);
    for (const char* proj : {".q", ".k", ".v", ".o"}) AddLinear(base + proj, d, d);
    AddNorm(base + ".norm_attn", d);
    AddConv(base + ".ffn0", c.decoder_kernel, d, c.decoder_filter);
    AddConv(base + ".ffn1", 1, c.decoder_filter, d);
    AddNorm(base + ".norm_ffn", d);
  }
  AddLinear(std::string(modules::kDecoder) + "out", d, c.n_mels);

  for (auto [prefix, c_in] : {std::pair{modules::kContentClassifier, d},
                              std::pair{modules::kEffectClassifier, c.n_mels}}) {
    const std::string base = prefix;
    AddConv(base + "conv0", c.classifier_kernel, c_in, c.classifier_channels);
    AddConv(base + "conv1", c.classifier_kernel, c.classifier_channels,
            c.classifier_channels);
    AddLinear(base + "out", c.classifier_channels, kNumEnvironments);
  }
}

Var EffectConversionModel::P(Tape& tape, const std::string& name) {
  return tape.Leaf(params_.Get(name));
}

// ---------------------------------------------------------------------------
// Submodules

Var EffectConversionModel::MelEncoder(Tape& tape, Var x, const SeqShape& shape,
                                      const std::vector<bool>& mask) {
  if (x.cols() != config_.n_mels) {
    throw Error(fmt::format("mel encoder: expected {} channels, got {}",
                            config_.n_mels, x.cols()));
  }
  const std::vector<double> w = MaskWeights(mask);
  Var h = nn::ScaleRows(x, w);
  for (int i = 0; i < config_.encoder_layers; ++i) {
    const std::string base = fmt::format("{}layer{}", modules::kEncoder, i);
    h = nn::Conv1d(h, P(tape, base + ".conv.w"), P(tape, base + ".conv.b"), shape,
                   config_.encoder_kernel);
    h = nn::Relu(h);
    h = nn::LayerNorm(h, P(tape, base + ".norm.gamma"), P(tape, base + ".norm.beta"));
    h = nn::ScaleRows(h, w);
  }
  return h;
}

Var EffectConversionModel::ConvBnRelu(Tape& tape, const std::string& name, Var x,
                                      const SeqShape& shape, bool bn_training) {
  // name is "<block>.<i>" split into conv<i> / bn<i>.
  const auto dot = name.rfind('.');
  const std::string block = name.substr(0, dot);
  const std::string idx = name.substr(dot + 1);
  Var h = nn::Conv1d(x, P(tape, block + ".conv" + idx + ".w"),
                     P(tape, block + ".conv" + idx + ".b"), shape, 3);
  nn::BatchNormState bn;
  bn.running_mean = &params_.Get(block + ".bn" + idx + ".running_mean");
  bn.running_var = &params_.Get(block + ".bn" + idx + ".running_var");
  h = nn::BatchNorm(h, P(tape, block + ".bn" + idx + ".gamma"),
                    P(tape, block + ".bn" + idx + ".beta"), bn, bn_training);
  return nn::Relu(h);
}

Var EffectConversionModel::UnetBlock(Tape& tape, const std::string& name, Var x,
                                     const SeqShape& shape, bool bn_training) {
  Var h = ConvBnRelu(tape, name + ".0", x, shape, bn_training);
  return ConvBnRelu(tape, name + ".1", h, shape, bn_training);
}

Var EffectConversionModel::EffectExtractor(Tape& tape, Var y, const SeqShape& shape,
                                           const std::vector<bool>& mask,
                                           bool batch_norm_training,
                                           std::vector<int>* trace) {
  if (y.cols() != config_.n_mels) {
    throw Error(fmt::format("effect extractor: expected {} channels, got {}",
                            config_.n_mels, y.cols()));
  }
  const int levels = 1 << config_.unet_depth;
  if (shape.time % levels != 0) {
    throw Error(fmt::format("effect extractor: time {} not divisible by {}",
                            shape.time, levels));
  }
  const std::string ee = modules::kEffectExtractor;
  if (trace) trace->assign(1, shape.time);

  Var h = nn::ScaleRows(y, MaskWeights(mask));
  SeqShape s = shape;
  std::vector<Var> skips;
  std::vector<SeqShape> skip_shapes;
  for (int i = 0; i < config_.unet_depth; ++i) {
    h = UnetBlock(tape, fmt::format("{}down{}", ee, i), h, s, batch_norm_training);
    skips.push_back(h);
    skip_shapes.push_back(s);
    h = nn::MaxPool2(h, s);
    s.time /= 2;
    if (trace) trace->push_back(s.time);
  }
  h = UnetBlock(tape, ee + "bottom", h, s, batch_norm_training);
  for (int i = config_.unet_depth - 1; i >= 0; --i) {
    const std::string base = fmt::format("{}up{}", ee, i);
    h = nn::ConvTranspose2(h, P(tape, base + ".tconv.w"), P(tape, base + ".tconv.b"), s);
    s = skip_shapes[i];
    if (trace) trace->push_back(s.time);
    h = nn::ConcatCols(h, skips[i]);
    h = UnetBlock(tape, base, h, s, batch_norm_training);
  }
  return nn::Conv1d(h, P(tape, ee + "out.w"), P(tape, ee + "out.b"), s, 1);
}

Var EffectConversionModel::EffectEncoder(Tape& tape, Var effect_spectrum, double alpha,
                                         const SeqShape& shape) {
  if (!(alpha >= 0.0 && alpha <= 2.0)) {
    throw Error(fmt::format("effect encoder: alpha {} outside [0, 2]", alpha));
  }
  const std::string base = std::string(modules::kEffectEncoder) + "conv";
  Var scaled = nn::Scale(effect_spectrum, alpha);
  return nn::Conv1d(scaled, P(tape, base + ".w"), P(tape, base + ".b"), shape,
                    config_.effect_encoder_kernel);
}

Var EffectConversionModel::Predictor(Tape& tape, const std::string& name, Var h,
                                     const SeqShape& shape,
                                     const std::vector<bool>& mask) {
  const std::vector<double> w = MaskWeights(mask);
  Var a = nn::Conv1d(h, P(tape, name + ".conv0.w"), P(tape, name + ".conv0.b"), shape,
                     config_.predictor_kernel);
  a = nn::LayerNorm(nn::Relu(a), P(tape, name + ".norm0.gamma"),
                    P(tape, name + ".norm0.beta"));
  a = nn::ScaleRows(a, w);
  a = nn::Conv1d(a, P(tape, name + ".conv1.w"), P(tape, name + ".conv1.b"), shape,
                 config_.predictor_kernel);
  a = nn::LayerNorm(nn::Relu(a), P(tape, name + ".norm1.gamma"),
                    P(tape, name + ".norm1.beta"));
  a = nn::ScaleRows(a, w);
  return nn::Linear(a, P(tape, name + ".out.w"), P(tape, name + ".out.b"));
}

int EffectConversionModel::PitchBucket(double standardized_log_f0) const {
  const double log_f0 = standardized_log_f0 * stats_.log_f0_std + stats_.log_f0_mean;
  const double lo = std::log(kMinF0), hi = std::log(kMaxF0);
  const double pos = (log_f0 - lo) / (hi - lo) * config_.pitch_bins;
  if (!std::isfinite(pos)) return 0;
  return std::clamp(static_cast<int>(std::floor(pos)), 0, config_.pitch_bins - 1);
}

int EffectConversionModel::EnergyBucket(double standardized_energy) const {
  const double span = stats_.energy_max - stats_.energy_min;
  const double pos = span > 0.0 ? (standardized_energy - stats_.energy_min) / span *
                                      config_.energy_bins
                                : 0.0;
  if (!std::isfinite(pos)) return 0;
  return std::clamp(static_cast<int>(std::floor(pos)), 0, config_.energy_bins - 1);
}

VarianceOutput EffectConversionModel::VarianceAdaptor(Tape& tape, Var content,
                                                      const SeqShape& shape,
                                                      const std::vector<bool>& mask,
                                                      const std::vector<double>* pitch_target,
                                                      const std::vector<double>* energy_target) {
  VarianceOutput out;
  const std::string base = modules::kVariance;
  out.pitch_pred = Predictor(tape, base + "pitch", content, shape, mask);
  out.energy_pred = Predictor(tape, base + "energy", content, shape, mask);
  for (const auto* t : {pitch_target, energy_target}) {
    if (t && static_cast<int>(t->size()) != shape.rows()) {
      throw Error("variance adaptor: one target per row required");
    }
  }
  std::vector<int> pitch_idx(shape.rows()), energy_idx(shape.rows());
  for (int r = 0; r < shape.rows(); ++r) {
    double p = out.pitch_pred.value()(r, 0);
    if (pitch_target) {
      const double hz = (*pitch_target)[r];
      // Unvoiced frames land in the lowest bin.
      p = hz > 0.0 ? (std::log(hz) - stats_.log_f0_mean) / stats_.log_f0_std
                   : -std::numeric_limits<double>::infinity();
    }
    double e = out.energy_pred.value()(r, 0);
    if (energy_target) e = ((*energy_target)[r] - stats_.energy_mean) / stats_.energy_std;
    pitch_idx[r] = PitchBucket(p);
    energy_idx[r] = EnergyBucket(e);
  }
  Var emb = nn::Add(nn::Embedding(P(tape, base + "pitch_embedding"), pitch_idx),
                    nn::Embedding(P(tape, base + "energy_embedding"), energy_idx));
  out.embedding = nn::ScaleRows(emb, MaskWeights(mask));
  return out;
}

Var EffectConversionModel::MelDecoder(Tape& tape, Var latent, const SeqShape& shape,
                                      const std::vector<bool>& mask) {
  const int d = config_.d_model;
  if (latent.cols() != d || latent.rows() != shape.rows()) {
    throw Error(fmt::format("mel decoder: expected {}x{} latent, got {}x{}",
                            shape.rows(), d, latent.rows(), latent.cols()));
  }
  const std::vector<double> w = MaskWeights(mask);
  Matrix positions(shape.rows(), d);
  const Matrix pe = SinusoidalPositions(shape.time, d);
  for (int b = 0; b < shape.batch; ++b) {
    positions.middleRows(b * shape.time, shape.time) = pe;
  }
  Var h = nn::ScaleRows(nn::AddConst(nn::ScaleRows(latent, w), positions), w);
  for (int i = 0; i < config_.decoder_layers; ++i) {
    const std::string base = fmt::format("{}block{}", modules::kDecoder, i);
    auto lin = [&](const char* proj, Var in) {
      return nn::Linear(in, P(tape, base + proj + ".w"), P(tape, base + proj + ".b"));
    };
    Var attn = nn::MultiHeadAttention(lin(".q", h), lin(".k", h), lin(".v", h), shape,
                                      config_.decoder_heads, mask);
    h = nn::LayerNorm(nn::Add(h, lin(".o", attn)), P(tape, base + ".norm_attn.gamma"),
                      P(tape, base + ".norm_attn.beta"));
    h = nn::ScaleRows(h, w);
    Var f = nn::Conv1d(h, P(tape, base + ".ffn0.w"), P(tape, base + ".ffn0.b"), shape,
                       config_.decoder_kernel);
    f = nn::Conv1d(nn::Relu(f), P(tape, base + ".ffn1.w"), P(tape, base + ".ffn1.b"),
                   shape, 1);
    h = nn::LayerNorm(nn::Add(h, f), P(tape, base + ".norm_ffn.gamma"),
                      P(tape, base + ".norm_ffn.beta"));
    h = nn::ScaleRows(h, w);
  }
  const std::string out = std::string(modules::kDecoder) + "out";
  Var mel = nn::Linear(h, P(tape, out + ".w"), P(tape, out + ".b"));
  if (!stats_.mel_mean.empty()) {
    Matrix scale(shape.rows(), config_.n_mels), shift(shape.rows(), config_.n_mels);
    for (int c = 0; c < config_.n_mels; ++c) {
      scale.col(c).setConstant(stats_.mel_std[c]);
      shift.col(c).setConstant(stats_.mel_mean[c]);
    }
    mel = nn::AddConst(nn::MulConst(mel, scale), shift);
  }
  return mel;
}

Var EffectConversionModel::Classify(Tape& tape, Var latent, const SeqShape& shape,
                                    const std::vector<bool>& mask, ClassifierSide side) {
  const std::string base = side == ClassifierSide::kContent
                               ? modules::kContentClassifier
                               : modules::kEffectClassifier;
  const std::vector<double> w = MaskWeights(mask);
  Var h = nn::ScaleRows(latent, w);
  h = nn::Relu(nn::Conv1d(h, P(tape, base + "conv0.w"), P(tape, base + "conv0.b"),
                          shape, config_.classifier_kernel));
  h = nn::Relu(nn::Conv1d(h, P(tape, base + "conv1.w"), P(tape, base + "conv1.b"),
                          shape, config_.classifier_kernel));
  Var pooled = nn::MaskedMeanPool(h, shape, mask);
  return nn::Linear(pooled, P(tape, base + "out.w"), P(tape, base + "out.b"));
}

ForwardResult EffectConversionModel::Forward(Tape& tape, const MelBatch& x,
                                             const MelBatch& y,
                                             const ForwardOptions& options) {
  if (x.shape.batch != y.shape.batch || x.shape.time != y.shape.time) {
    throw Error("forward: source and reference batches must share a shape");
  }
  auto standardize = [&](const Matrix& m) {
    if (stats_.mel_mean.empty()) return m;
    Matrix out = m;
    for (int c = 0; c < config_.n_mels; ++c) {
      out.col(c) = (out.col(c).array() - stats_.mel_mean[c]) / stats_.mel_std[c];
    }
    return out;
  };
  if (x.frames.cols() != config_.n_mels || y.frames.cols() != config_.n_mels) {
    throw Error(fmt::format("forward: expected {} mel channels", config_.n_mels));
  }
  ForwardResult r;
  Var xv = tape.Constant(standardize(x.frames));
  Var yv = tape.Constant(standardize(y.frames));
  r.content = MelEncoder(tape, xv, x.shape, x.mask);
  r.effect_spectrum =
      EffectExtractor(tape, yv, y.shape, y.mask, options.batch_norm_training,
                      options.unet_trace);
  r.condition = EffectEncoder(tape, r.effect_spectrum, options.alpha, y.shape);
  r.variance = VarianceAdaptor(tape, r.content, x.shape, x.mask, options.pitch_target,
                               options.energy_target);
  Var z = nn::Add(nn::Add(r.content, r.condition), r.variance.embedding);
  r.mel = MelDecoder(tape, z, x.shape, x.mask);
  return r;
}

// ---------------------------------------------------------------------------
// Helpers

MelBatch StackMels(const std::vector<const Matrix*>& frames,
                   const std::vector<const std::vector<bool>*>& masks) {
  if (frames.empty() || frames.size() != masks.size()) {
    throw Error("StackMels: need one mask per spectrogram");
  }
  const int time = static_cast<int>(frames[0]->rows());
  const int cols = static_cast<int>(frames[0]->cols());
  MelBatch batch;
  batch.shape = {static_cast<int>(frames.size()), time};
  batch.frames.resize(batch.shape.rows(), cols);
  batch.mask.reserve(batch.shape.rows());
  for (size_t b = 0; b < frames.size(); ++b) {
    if (frames[b]->rows() != time || frames[b]->cols() != cols ||
        static_cast<int>(masks[b]->size()) != time) {
      throw Error("StackMels: spectrograms must share a padded shape");
    }
    batch.frames.middleRows(static_cast<int>(b) * time, time) = *frames[b];
    batch.mask.insert(batch.mask.end(), masks[b]->begin(), masks[b]->end());
  }
  return batch;
}

std::vector<int> UnetTimeTrace(int time, int depth) {
  std::vector<int> trace{time};
  for (int i = 0; i < depth; ++i) trace.push_back(trace.back() / 2);
  for (int i = 0; i < depth; ++i) trace.push_back(trace.back() * 2);
  return trace;
}

std::vector<double> MaskWeights(const std::vector<bool>& mask) {
  std::vector<double> w(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) w[i] = mask[i] ? 1.0 : 0.0;
  return w;
}

uint64_t Fnv1a64(const std::string& text) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace envconv
