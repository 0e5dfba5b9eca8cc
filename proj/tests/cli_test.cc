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

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "envconv/cli.h"
#include "envconv/dataset.h"
#include "support/synth_speech.h"

namespace envconv {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int rc = 0;
  std::string out;
  std::string err;
};

CliRun RunEnvconv(std::vector<std::string> args) {
  args.insert(args.begin(), "envconv");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  ::testing::internal::CaptureStdout();
  ::testing::internal::CaptureStderr();
  CliRun r;
  r.rc = RunCli(static_cast<int>(argv.size()), argv.data());
  r.out = ::testing::internal::GetCapturedStdout();
  r.err = ::testing::internal::GetCapturedStderr();
  return r;
}

TEST(CliTest, HelpListsSubcommands) {
  const CliRun r = RunEnvconv({"--help"});
  EXPECT_EQ(r.rc, 0);
  for (const char* sub : {"make-dataset", "extract-features", "train", "convert",
                          "evaluate", "plot"}) {
    EXPECT_NE((r.out + r.err).find(sub), std::string::npos) << sub;
  }
}

TEST(CliTest, MissingRequiredKeyIsNamed) {
  const CliRun r = RunEnvconv({"--log-level", "off", "train", "--out-dir", "/tmp/unused"});
  EXPECT_NE(r.rc, 0);
  EXPECT_NE(r.err.find("paths.features"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("--features"), std::string::npos) << r.err;
}

TEST(CliTest, UnknownFlagAndSubcommandFail) {
  EXPECT_NE(RunEnvconv({"train", "--bogus", "1"}).rc, 0);
  EXPECT_NE(RunEnvconv({"frobnicate"}).rc, 0);
  EXPECT_NE(RunEnvconv({}).rc, 0);
}

TEST(CliTest, UnknownConfigKeyFails) {
  const auto dir = testing::TempDir("cli_config");
  std::ofstream(dir / "bad.cfg") << "# comment\ntrain.batch_sise = 4\n";
  const CliRun r = RunEnvconv({"--config", (dir / "bad.cfg").string(), "plot"});
  EXPECT_NE(r.rc, 0);
  EXPECT_NE(r.err.find("train.batch_sise"), std::string::npos) << r.err;
  std::ofstream(dir / "dup.cfg") << "train.batch_size = 4\ntrain.batch_size = 5\n";
  EXPECT_NE(RunEnvconv({"--config", (dir / "dup.cfg").string(), "plot"}).rc, 0);
  fs::remove_all(dir);
}

TEST(CliConfigTest, PresetsAndOverrides) {
  KeyValues kv = MergeRunConfig(DefaultRunConfig(),
                                {{"model.preset", "toy"}, {"model.d_model", "16"}});
  const ModelConfig m = ModelConfigFrom(kv);
  EXPECT_EQ(m.d_model, 16);
  EXPECT_EQ(m.max_frames, ModelConfig::Toy().max_frames);
  EXPECT_EQ(ModelConfigFrom(DefaultRunConfig()).Serialize(), ModelConfig().Serialize());
  EXPECT_THROW(ModelConfigFrom(MergeRunConfig(DefaultRunConfig(),
                                              {{"model.preset", "huge"}})),
               Error);
  EXPECT_THROW(MergeRunConfig(DefaultRunConfig(), {{"nope", "1"}}), Error);
  const TrainConfig t =
      TrainConfigFrom(MergeRunConfig(DefaultRunConfig(), {{"train.total_steps", "50"}}));
  EXPECT_EQ(t.total_steps, 50);
  EXPECT_EQ(t.batch_size, 16);
  EXPECT_THROW(TrainConfigFrom(MergeRunConfig(DefaultRunConfig(),
                                              {{"train.batch_size", "-1"}})),
               Error);
}

TEST(CliTest, DatasetFeaturesAndPlot) {
  const auto dir = testing::TempDir("cli_pipeline");
  testing::WriteToyClips(dir / "clean", 3, 5);
  const std::string corpus = (dir / "corpus").string();
  ASSERT_EQ(RunEnvconv({"--log-level", "warn", "--seed", "4", "make-dataset", "--clean-dir",
                 (dir / "clean").string(), "--out-dir", corpus, "--split-ratios",
                 "1,0,0"})
                .rc,
            0);
  const CorpusManifest m = ReadManifest(dir / "corpus" / "manifest.tsv");
  EXPECT_EQ(m.entries.size(), 15u);
  const std::string feats = (dir / "features").string();
  ASSERT_EQ(RunEnvconv({"--log-level", "warn", "extract-features", "--manifest",
                 corpus + "/manifest.tsv", "--out-dir", feats})
                .rc,
            0);
  std::vector<fs::path> feat_files;
  for (const auto& e : fs::recursive_directory_iterator(feats)) {
    if (e.path().extension() == ".feat") feat_files.push_back(e.path());
  }
  ASSERT_EQ(feat_files.size(), 15u);
  std::sort(feat_files.begin(), feat_files.end());
  const fs::path png = dir / "fig.png";
  EXPECT_EQ(RunEnvconv({"--log-level", "warn", "plot", "--converted", feat_files[0].string(),
                 "--truth", feat_files[1].string(), "--out", png.string()})
                .rc,
            0);
  EXPECT_TRUE(fs::exists(png));
  fs::remove_all(dir);
}

}  // namespace
}  // namespace envconv
