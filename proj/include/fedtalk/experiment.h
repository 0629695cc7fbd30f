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
#ifndef FEDTALK_EXPERIMENT_H_
#define FEDTALK_EXPERIMENT_H_

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "fedtalk/config.h"
#include "fedtalk/denoiser.h"
#include "fedtalk/objectives.h"
#include "fedtalk/schedule.h"
#include "fedtalk/server.h"
#include "fedtalk/synthdata.h"

namespace fedtalk {

inline constexpr char kMetricsFile[] = "val_metrics_all_rounds.csv";
inline constexpr char kMetricsHeader[] =
    "round,val_loss,val_identity,val_temporal";
inline constexpr char kResolvedConfigFile[] = "resolved_config.ini";
inline constexpr char kSummaryFile[] = "summary.csv";

// Everything a run shares across strategies, derived from the run seed.
struct Environment {
  World world;
  NoiseSchedule schedule;
  BackboneParams backbone;
  FrozenProbes probes;
  AdapterSet initial_adapters;
  uint64_t world_hash = 0;

  FederationEnv view() const {
    return {&world, &backbone, &schedule, &probes};
  }
};

// The backbone is pretrained on the public clips with the diffusion term
// only, so it does not depend on the client loss weights.
absl::StatusOr<Environment> BuildEnvironment(const ExperimentConfig& config);

// "round,val_loss,..." data row with 12 significant digits.
std::string FormatMetricsRow(const RoundRecord& record);

struct RunOutput {
  FederationResult result;
  uint64_t world_hash = 0;
};

// Runs one federation. With a non-empty config.out_dir, writes the metrics
// CSV (flushed every round, so a failed run leaves its partial log),
// checkpoints/best.adapters, checkpoints/final.adapters and the resolved
// config. Progress lines go to `log` when given.
absl::StatusOr<RunOutput> RunExperiment(const ExperimentConfig& config,
                                        std::ostream* log = nullptr);
absl::StatusOr<RunOutput> RunExperiment(const ExperimentConfig& config,
                                        const Environment& env,
                                        std::ostream* log = nullptr);

struct SummaryRow {
  std::string name;
  absl::Status status;
  int best_round = 0;
  RoundRecord best;
  uint64_t world_hash = 0;
  // Mean validation jitter at the final round.
  double final_jitter = 0.0;
};

std::string FormatSummary(std::span<const SummaryRow> rows);

struct NamedConfig {
  std::string name;
  ExperimentConfig config;
};

// Runs every variant on one shared environment; each writes into
// <out_dir>/<name>/ and the summary goes to <out_dir>/summary.csv. A failed
// variant marks its row and does not stop the others.
absl::StatusOr<std::vector<SummaryRow>> RunVariants(
    const ExperimentConfig& base, std::span<const NamedConfig> variants,
    std::ostream* log = nullptr);

std::vector<NamedConfig> StrategyVariants(const ExperimentConfig& base,
                                          std::span<const Strategy> strategies);

// adapters_only: isfa with gamma 0, no TDC term, DP off. plus_dp, plus_isfa
// and plus_tdc each restore one of those from `base`; full restores all
// three. DP is switched on for plus_dp and full.
std::vector<NamedConfig> AblationVariants(const ExperimentConfig& base);

}  // namespace fedtalk

#endif  // FEDTALK_EXPERIMENT_H_
