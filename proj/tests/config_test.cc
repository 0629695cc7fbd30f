/*
 * Copyright 2026 The fedtalk Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "fedtalk/config.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "gtest/gtest.h"

namespace fedtalk {
namespace {

TEST(ParseConfigTest, SectionsAndDefaults) {
  absl::StatusOr<ExperimentConfig> c = ParseConfig(
      "# comment\n"
      "seed = 42\n"
      "out = runs/a\n"
      "\n"
      "[world]\n"
      "num_clients = 7\n"
      "data_noise = 0.125\n"
      "; another comment\n"
      "[federation]\n"
      "strategy = fedprox\n"
      "secure_agg = false\n"
      "[privacy]\n"
      "enabled = true\n"
      "clip_norm = 2.5\n",
      "inline");
  ASSERT_TRUE(c.ok()) << c.status();
  EXPECT_EQ(c->seed, 42u);
  EXPECT_EQ(c->out_dir, "runs/a");
  EXPECT_EQ(c->world.num_clients, 7);
  EXPECT_EQ(c->world.data_noise, 0.125);
  EXPECT_EQ(c->federation.strategy, Strategy::kFedProx);
  EXPECT_FALSE(c->federation.secure_agg);
  EXPECT_TRUE(c->federation.dp.enabled);
  EXPECT_EQ(c->federation.dp.clip_norm, 2.5);
  // Untouched keys keep their defaults.
  EXPECT_EQ(c->world.frames, WorldConfig{}.frames);
  EXPECT_EQ(c->federation.num_rounds, FederationConfig{}.num_rounds);
}

TEST(ParseConfigTest, ErrorsCarryLineNumbers) {
  absl::StatusOr<ExperimentConfig> c =
      ParseConfig("seed = 1\n[world]\nnum_clientz = 3\n", "cfg.ini");
  ASSERT_FALSE(c.ok());
  EXPECT_NE(std::string(c.status().message()).find("cfg.ini:3:"),
            std::string::npos)
      << c.status();

  c = ParseConfig("[world]\nframes = 4\nframes = 5\n", "dup.ini");
  ASSERT_FALSE(c.ok());
  EXPECT_NE(std::string(c.status().message()).find("dup.ini:3:"),
            std::string::npos);

  c = ParseConfig("[world]\nframes = four\n", "bad.ini");
  ASSERT_FALSE(c.ok());
  EXPECT_NE(std::string(c.status().message()).find("bad.ini:2:"),
            std::string::npos);

  EXPECT_FALSE(ParseConfig("[nowhere]\nx = 1\n", "s").ok());
  EXPECT_FALSE(ParseConfig("just text\n", "s").ok());
  EXPECT_FALSE(ParseConfig("[federation]\nstrategy = median\n", "s").ok());
}

// Range checks run after overrides are applied, not while parsing.
TEST(ParseConfigTest, SemanticValidation) {
  for (const char* text : {"[federation]\nclient_fraction = 0\n",
                           "[world]\nnum_clients = -2\n",
                           "[schedule]\nbeta_end = 1.5\n"}) {
    absl::StatusOr<ExperimentConfig> c = ParseConfig(text, "s");
    ASSERT_TRUE(c.ok()) << text;
    EXPECT_FALSE(c->Validate().ok()) << text;
  }
  EXPECT_TRUE(ExperimentConfig{}.Validate().ok());
}

TEST(SerializeConfigTest, RoundTripIsExact) {
  ExperimentConfig c;
  c.seed = 123456789012345ull;
  c.world.data_noise = 0.1 + 0.2;
  c.federation.gamma = 1.0 / 3.0;
  c.federation.strategy = Strategy::kFedAvg;
  c.federation.dp.enabled = true;
  c.federation.local.weights.tdc = 0.0;
  c.out_dir = "some/dir";
  const std::string text = SerializeConfig(c);
  absl::StatusOr<ExperimentConfig> back = ParseConfig(text, "resolved");
  ASSERT_TRUE(back.ok()) << back.status();
  EXPECT_EQ(SerializeConfig(*back), text);
  EXPECT_EQ(back->world.data_noise, c.world.data_noise);
  EXPECT_EQ(back->federation.gamma, c.federation.gamma);
  EXPECT_EQ(back->seed, c.seed);
}

TEST(SetConfigValueTest, DottedNames) {
  ExperimentConfig c;
  ASSERT_TRUE(SetConfigValue(c, "federation.rounds", "7").ok());
  ASSERT_TRUE(SetConfigValue(c, "local.lambda_tdc", "0.25").ok());
  ASSERT_TRUE(SetConfigValue(c, "seed", "9").ok());
  EXPECT_EQ(c.federation.num_rounds, 7);
  EXPECT_EQ(c.federation.local.weights.tdc, 0.25);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_FALSE(SetConfigValue(c, "federation.nope", "1").ok());
  EXPECT_FALSE(SetConfigValue(c, "federation.rounds", "x").ok());
}

TEST(EnvironmentOverrideTest, AppliesPrefixedVariables) {
  ExperimentConfig c;
  ::setenv("FEDTALK_FEDERATION_GAMMA", "2.5", 1);
  ::setenv("FEDTALK_SEED", "77", 1);
  ASSERT_TRUE(ApplyEnvironmentOverrides(c).ok());
  ::unsetenv("FEDTALK_FEDERATION_GAMMA");
  ::unsetenv("FEDTALK_SEED");
  EXPECT_EQ(c.federation.gamma, 2.5);
  EXPECT_EQ(c.seed, 77u);

  ::setenv("FEDTALK_WORLD_FRAMES", "many", 1);
  EXPECT_FALSE(ApplyEnvironmentOverrides(c).ok());
  ::unsetenv("FEDTALK_WORLD_FRAMES");
}

TEST(LoadConfigTest, ReadsFilesAndReportsMissing) {
  const std::string path =
      (std::filesystem::path(::testing::TempDir()) / "load.ini").string();
  {
    std::ofstream out(path);
    out << "[eval]\nclips = 3\n";
  }
  absl::StatusOr<ExperimentConfig> c = LoadConfig(path);
  ASSERT_TRUE(c.ok()) << c.status();
  EXPECT_EQ(c->federation.eval.clips, 3);
  EXPECT_FALSE(LoadConfig(path + ".missing").ok());
}

}  // namespace
}  // namespace fedtalk
