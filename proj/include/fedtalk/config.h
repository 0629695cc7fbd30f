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
#ifndef FEDTALK_CONFIG_H_
#define FEDTALK_CONFIG_H_

#include <cstdint>
#include <string>
#include <string_view>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "fedtalk/denoiser.h"
#include "fedtalk/schedule.h"
#include "fedtalk/server.h"
#include "fedtalk/synthdata.h"

namespace fedtalk {

struct ScheduleConfig {
  int steps = kDefaultDiffusionSteps;
  double beta_start = kDefaultBetaStart;
  double beta_end = kDefaultBetaEnd;
};

struct ModelConfig {
  int time_embed_dim = 8;
  int hidden_dim = 64;
  int adapter_rank = 4;
  int perceptual_dim = 16;
  // Central backbone fit on the public clips before federation.
  PretrainConfig pretrain;
};

struct ExperimentConfig {
  uint64_t seed = 0;
  // Output directory; empty keeps everything in memory.
  std::string out_dir;
  WorldConfig world;
  ScheduleConfig schedule;
  ModelConfig model;
  // federation.seed is ignored in favor of `seed`.
  FederationConfig federation;

  DenoiserDims dims() const;
  absl::Status Validate() const;
};

// Text format: `key = value` lines, optionally under `[section]` headers;
// blank lines and lines starting with '#' or ';' are ignored. Top-level keys
// are `seed` and `out`; sections are world, schedule, model, local,
// federation, privacy and eval. Unknown or repeated keys are errors, reported
// as `<source>:<line>: ...`. Keys absent from the text keep their defaults.
absl::StatusOr<ExperimentConfig> ParseConfig(std::string_view text,
                                             std::string_view source);
absl::StatusOr<ExperimentConfig> LoadConfig(const std::string& path);

// Sets one value by dotted name, e.g. "federation.rounds" or "seed".
absl::Status SetConfigValue(ExperimentConfig& config, std::string_view name,
                            std::string_view value);

// Applies FEDTALK_<SECTION>_<KEY> (or FEDTALK_<KEY> for top-level keys)
// environment variables.
absl::Status ApplyEnvironmentOverrides(ExperimentConfig& config);

// Every key with its resolved value, re-parseable by ParseConfig. Doubles
// are printed with 17 significant digits so a re-run is exact.
std::string SerializeConfig(const ExperimentConfig& config);

}  // namespace fedtalk

#endif  // FEDTALK_CONFIG_H_
