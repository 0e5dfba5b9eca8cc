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

#include "envconv/cli.h"

#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "envconv/checkpoint.h"
#include "envconv/dataset.h"
#include "envconv/evaluation.h"
#include "envconv/feature_cache.h"
#include "envconv/inference.h"

namespace envconv {
namespace {

namespace fs = std::filesystem;

struct Flag {
  const char* name;
  const char* key;
  const char* help;
};

// Per-subcommand flags and the config key each one sets.
const std::map<std::string, std::vector<Flag>>& CommandFlags() {
  static const std::map<std::string, std::vector<Flag>> flags = {
      {"make-dataset",
       {{"--clean-dir", "paths.clean_dir", "directory of clean .wav clips"},
        {"--rt60", "dataset.rt60", "per-environment RT60, e.g. bathroom=0.5,cave=2.5"},
        {"--split-ratios", "dataset.split_ratios", "train,val,test fractions"}}},
      {"extract-features",
       {{"--manifest", "paths.manifest", "corpus manifest.tsv"}}},
      {"train",
       {{"--features", "paths.features", "feature cache directory"},
        {"--steps", "train.total_steps", "total optimizer steps"},
        {"--resume", "paths.resume", "checkpoint to continue from"}}},
      {"convert",
       {{"--checkpoint", "paths.checkpoint", "model checkpoint"},
        {"--source", "convert.source", "source .wav"},
        {"--reference", "convert.reference", "reference .wav in the target environment"},
        {"--alpha", "convert.alpha", "effect strength in [0, 2]"},
        {"--out", "convert.out", "output .wav"},
        {"--save-mel", "convert.save_mel", "also write the converted mel here"},
        {"--vocoder", "vocoder.kind", "griffin-lim or external"},
        {"--vocoder-command", "vocoder.command",
         "external vocoder command with {mel} and {wav} placeholders"}}},
      {"evaluate",
       {{"--checkpoint", "paths.checkpoint", "model checkpoint"},
        {"--manifest", "paths.manifest", "corpus manifest.tsv"},
        {"--target-env", "evaluate.target_env", "target environment or 'all'"},
        {"--split", "evaluate.split", "train, val or test"},
        {"--out", "evaluate.out", "report path"}}},
      {"plot",
       {{"--converted", "plot.converted", "converted .wav or .feat"},
        {"--truth", "plot.truth", "ground-truth .wav or .feat"},
        {"--out", "plot.out", "image path (.png)"}}},
  };
  return flags;
}

const std::map<std::string, std::string>& CommandHelp() {
  static const std::map<std::string, std::string> help = {
      {"make-dataset", "Convolve clean clips with four synthetic RIRs into a 5x corpus"},
      {"extract-features", "Compute mel, pitch and energy for every manifest entry"},
      {"train", "Train the conversion model"},
      {"convert", "Convert a source clip toward the environment of a reference"},
      {"evaluate", "Mel-cepstral distortion of conversions against ground truth"},
      {"plot", "Spectrum, pitch and energy comparison figure"},
  };
  return help;
}

const std::string& Require(const KeyValues& kv, const std::string& key,
                           const std::string& flag) {
  const auto it = kv.find(key);
  if (it == kv.end() || it->second.empty()) {
    throw Error(fmt::format("missing required config key {} (set it in the config "
                            "file or pass {})",
                            key, flag));
  }
  return it->second;
}

double ParseDouble(const KeyValues& kv, const std::string& key) {
  return ParseDoubleValue(key, kv.at(key));
}

std::array<RoomImpulseResponse, 4> ParseRirs(const std::string& spec, uint64_t seed) {
  std::map<Environment, double> rt60;
  for (Environment env : kReverberantEnvironments) {
    rt60[env] = DefaultRirPreset(env).rt60;
  }
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    const auto env = ParseEnvironment(eq == std::string::npos ? item : item.substr(0, eq));
    if (eq == std::string::npos || !env || *env == Environment::kClean) {
      throw Error(fmt::format("dataset.rt60: bad entry '{}'", item));
    }
    rt60[*env] = ParseDoubleValue("dataset.rt60", item.substr(eq + 1));
  }
  std::array<RoomImpulseResponse, 4> rirs;
  for (size_t i = 0; i < kReverberantEnvironments.size(); ++i) {
    const Environment env = kReverberantEnvironments[i];
    rirs[i] = SynthesizeRir(env, rt60[env], seed);
  }
  return rirs;
}

SplitRatios ParseRatios(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) v.push_back(ParseDoubleValue("dataset.split_ratios", item));
  if (v.size() != 3) throw Error("dataset.split_ratios needs three values");
  return {v[0], v[1], v[2]};
}

PlotTrack LoadPlotTrack(const fs::path& path) {
  if (path.extension() == ".feat") return PlotTrackFromRecord(ReadFeatureRecord(path));
  return PlotTrackFromWave(ReadWav(path));
}

int RunMakeDataset(const KeyValues& kv) {
  const fs::path clean = Require(kv, "paths.clean_dir", "--clean-dir");
  const fs::path out = Require(kv, "paths.out_dir", "--out-dir");
  const uint64_t seed = std::stoull(kv.at("dataset.seed"));
  CorpusOptions options;
  options.seed = seed;
  options.ratios = ParseRatios(kv.at("dataset.split_ratios"));
  options.max_frames = ParseIntValue("dataset.max_frames", kv.at("dataset.max_frames"));
  const CorpusManifest manifest =
      BuildCorpus(clean, out, ParseRirs(kv.at("dataset.rt60"), seed), options);
  spdlog::info("manifest: {} entries, {} rejected", manifest.entries.size(),
               manifest.rejects.size());
  return 0;
}

int RunExtractFeatures(const KeyValues& kv) {
  const fs::path manifest = Require(kv, "paths.manifest", "--manifest");
  const fs::path out = Require(kv, "paths.out_dir", "--out-dir");
  BuildFeatureCache(manifest, out);
  return 0;
}

int RunTrain(const KeyValues& kv) {
  const fs::path features = Require(kv, "paths.features", "--features");
  const fs::path out = Require(kv, "paths.out_dir", "--out-dir");
  const ModelConfig model_config = ModelConfigFrom(kv);
  const TrainConfig train_config = TrainConfigFrom(kv);
  spdlog::info("model configuration\n{}", model_config.Serialize());
  const FeatureSet set = LoadFeatureSet(features);
  const auto records = SelectSplit(set, Split::kTrain);
  if (records.empty()) throw Error("the feature cache has no training records");
  const TrainingData data = BuildTrainingData(records, model_config.max_frames);
  spdlog::info("training on {} items", data.items.size());
  TrainOptions options;
  options.out_dir = out;
  if (const auto it = kv.find("paths.resume"); it != kv.end()) options.resume = it->second;
  Train(train_config, model_config, data, options);
  return 0;
}

int RunConvert(const KeyValues& kv) {
  const fs::path ckpt = Require(kv, "paths.checkpoint", "--checkpoint");
  const fs::path source = Require(kv, "convert.source", "--source");
  const fs::path reference = Require(kv, "convert.reference", "--reference");
  const fs::path out = Require(kv, "convert.out", "--out");
  const double alpha = ParseDouble(kv, "convert.alpha");
  LoadedCheckpoint loaded = LoadCheckpoint(ckpt);
  auto vocoder = MakeVocoder(kv.at("vocoder.kind"),
                             ParseIntValue("vocoder.iterations", kv.at("vocoder.iterations")),
                             kv.at("vocoder.command"));
  const ConversionResult result =
      Convert(*loaded.model, ReadWav(source), ReadWav(reference), alpha, *vocoder);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  WriteWav(out, PeakNormalize(result.wave, kOutputPeak));
  if (const auto& mel_path = kv.at("convert.save_mel"); !mel_path.empty()) {
    WriteMelFile(mel_path, result.mel.frames);
  }
  spdlog::info("wrote {} ({} frames)", out.string(), result.mel.frame_count);
  return 0;
}

int RunEvaluate(const KeyValues& kv) {
  const fs::path ckpt = Require(kv, "paths.checkpoint", "--checkpoint");
  const fs::path manifest = Require(kv, "paths.manifest", "--manifest");
  const fs::path out = Require(kv, "evaluate.out", "--out");
  const Split split = ParseSplit(kv.at("evaluate.split"));
  const auto targets = ParseTargets(Require(kv, "evaluate.target_env", "--target-env"));
  LoadedCheckpoint loaded = LoadCheckpoint(ckpt);
  const FeatureSet set = ExtractFeatureSet(manifest);
  const EvaluationReport report =
      EvaluateCorpus(set, split, targets, ModelConverter(*loaded.model, 1.0));
  WriteReport(out, report);
  std::cout << FormatReportSummary(report);
  return 0;
}

int RunPlot(const KeyValues& kv) {
  const fs::path converted = Require(kv, "plot.converted", "--converted");
  const fs::path truth = Require(kv, "plot.truth", "--truth");
  const fs::path out = Require(kv, "plot.out", "--out");
  PlotTrack a = LoadPlotTrack(converted);
  PlotTrack b = LoadPlotTrack(truth);
  // Vocoded output can differ from the truth by a frame; compare the overlap.
  const int frames = static_cast<int>(std::min(a.mel.rows(), b.mel.rows()));
  for (PlotTrack* p : {&a, &b}) {
    p->mel.conservativeResize(frames, Eigen::NoChange);
    p->pitch.resize(frames);
    p->energy.resize(frames);
  }
  PlotComparison(a, b, out);
  spdlog::info("wrote {}", out.string());
  return 0;
}

}  // namespace

KeyValues DefaultRunConfig() {
  KeyValues kv = {
      {"paths.clean_dir", ""},
      {"paths.manifest", ""},
      {"paths.features", ""},
      {"paths.out_dir", ""},
      {"paths.checkpoint", ""},
      {"paths.resume", ""},
      {"dataset.seed", std::to_string(kDefaultSplitSeed)},
      {"dataset.rt60", "bathroom=0.5,classroom=0.7,gallery=1.5,cave=2.5"},
      {"dataset.split_ratios", "0.98,0.01,0.01"},
      {"dataset.max_frames", std::to_string(kMaxFrames)},
      {"model.preset", "full"},
      {"convert.source", ""},
      {"convert.reference", ""},
      {"convert.alpha", "1.0"},
      {"convert.out", ""},
      {"convert.save_mel", ""},
      {"vocoder.kind", "griffin-lim"},
      {"vocoder.iterations", "64"},
      {"vocoder.command", ""},
      {"evaluate.target_env", "all"},
      {"evaluate.split", "test"},
      {"evaluate.out", ""},
      {"plot.converted", ""},
      {"plot.truth", ""},
      {"plot.out", ""},
  };
  // Empty model values defer to model.preset.
  for (const auto& [k, v] : ParseKeyValues(ModelConfig().Serialize(), "<defaults>")) {
    kv[k] = "";
  }
  for (const auto& [k, v] : TrainConfig().ToKeyValues()) kv[k] = v;
  return kv;
}

KeyValues MergeRunConfig(const KeyValues& base, const KeyValues& overrides) {
  KeyValues out = base;
  for (const auto& [k, v] : overrides) {
    if (!out.count(k)) throw Error(fmt::format("unknown config key {}", k));
    out[k] = v;
  }
  return out;
}

ModelConfig ModelConfigFrom(const KeyValues& kv) {
  const std::string preset = kv.count("model.preset") ? kv.at("model.preset") : "full";
  ModelConfig base;
  if (preset == "toy") {
    base = ModelConfig::Toy();
  } else if (preset == "micro") {
    base = ModelConfig::Micro();
  } else if (preset != "full") {
    throw Error(fmt::format("model.preset: unknown preset '{}'", preset));
  }
  KeyValues changed;
  for (const auto& [k, v] : kv) {
    if (k.rfind("model.", 0) != 0 || k == "model.preset" || v.empty()) continue;
    changed[k] = v;
  }
  ApplyModelKeys(changed, base, /*allow_unknown=*/false);
  base.Validate();
  return base;
}

TrainConfig TrainConfigFrom(const KeyValues& kv) {
  TrainConfig c;
  KeyValues train;
  for (const auto& [k, v] : kv) {
    if (k.rfind("train.", 0) == 0) train[k] = v;
  }
  ApplyTrainKeys(train, c, /*allow_unknown=*/false);
  c.Validate();
  return c;
}

int RunCli(int argc, char** argv) {
  CLI::App app{"Acoustic environment conversion for speech", "envconv"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, log_level = "info", out_dir;
  std::optional<uint64_t> seed;
  app.add_option("--config", config_path, "key = value configuration file");
  app.add_option("--seed", seed, "seed for dataset splits, RIRs, init and batches");
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));
  app.add_option("--out-dir", out_dir, "output directory");

  std::map<std::string, std::string> flag_values;
  std::map<std::string, CLI::App*> commands;
  for (const auto& [name, flags] : CommandFlags()) {
    CLI::App* sub = app.add_subcommand(name, CommandHelp().at(name));
    for (const Flag& f : flags) {
      sub->add_option(f.name, flag_values[std::string(f.key)], f.help);
    }
    commands[name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    if (rc != 0) std::cerr << app.help();
    return rc;
  }

  try {
    spdlog::set_level(spdlog::level::from_str(log_level));
    KeyValues resolved = DefaultRunConfig();
    if (!config_path.empty()) {
      resolved = MergeRunConfig(resolved, ReadKeyValuesFile(config_path));
    }
    KeyValues overrides;
    std::string command;
    for (const auto& [name, sub] : commands) {
      if (!sub->parsed()) continue;
      command = name;
      for (const Flag& f : CommandFlags().at(name)) {
        if (sub->count(f.name) > 0) overrides[f.key] = flag_values[f.key];
      }
    }
    if (!out_dir.empty()) overrides["paths.out_dir"] = out_dir;
    if (seed) {
      overrides["dataset.seed"] = std::to_string(*seed);
      overrides["train.seed"] = std::to_string(*seed);
      overrides["model.init_seed"] = std::to_string(*seed);
    }
    resolved = MergeRunConfig(resolved, overrides);
    spdlog::info("{}: resolved configuration\n{}", command, FormatKeyValues(resolved));
    spdlog::info("seeds: dataset={} train={} model_init={}", resolved.at("dataset.seed"),
                 resolved.at("train.seed"), resolved.at("model.init_seed"));

    if (command == "make-dataset") return RunMakeDataset(resolved);
    if (command == "extract-features") return RunExtractFeatures(resolved);
    if (command == "train") return RunTrain(resolved);
    if (command == "convert") return RunConvert(resolved);
    if (command == "evaluate") return RunEvaluate(resolved);
    if (command == "plot") return RunPlot(resolved);
    throw Error(fmt::format("unknown subcommand {}", command));
  } catch (const std::exception& e) {
    std::cerr << "envconv: error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace envconv
