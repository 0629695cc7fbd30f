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
#include "fedtalk/experiment.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "absl/strings/str_cat.h"
#include "fedtalk/binary_io.h"
#include "fedtalk/random.h"

namespace fedtalk {
namespace {

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string Hex(uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

absl::Status EnsureDirectory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    return absl::PermissionDeniedError(
        absl::StrCat("cannot create ", dir.string(), ": ", ec.message()));
  }
  return absl::OkStatus();
}

}  // namespace

absl::StatusOr<Environment> BuildEnvironment(const ExperimentConfig& config) {
  if (absl::Status s = config.Validate(); !s.ok()) return s;
  const uint64_t seed = config.seed;
  absl::StatusOr<World> world =
      GenerateWorld(config.world, DeriveSeed(seed, {kTagWorld}));
  if (!world.ok()) return world.status();
  absl::StatusOr<NoiseSchedule> schedule =
      BuildLinearSchedule(config.schedule.steps, config.schedule.beta_start,
                          config.schedule.beta_end);
  if (!schedule.ok()) return schedule.status();
  absl::StatusOr<BackboneParams> backbone =
      BackboneParams::Create(config.dims(), DeriveSeed(seed, {kTagBackbone}));
  if (!backbone.ok()) return backbone.status();
  FrozenProbes probes = FrozenProbes::Create(
      config.world.latent_dim, config.world.identity_dim,
      config.model.perceptual_dim, DeriveSeed(seed, {kTagProbes}));
  const LossWeights diffusion_only{0.0, 0.0, 0.0, 0.0};
  if (absl::Status s = PretrainBackbone(
          *backbone, world->public_clips, *schedule, probes, diffusion_only,
          config.model.pretrain, DeriveSeed(seed, {kTagPretrain}));
      !s.ok()) {
    return s;
  }
  absl::StatusOr<AdapterSet> adapters =
      AdapterSet::Initialize(config.dims(), config.model.adapter_rank,
                             DeriveSeed(seed, {kTagAdapterInit}));
  if (!adapters.ok()) return adapters.status();
  const uint64_t hash = WorldHash(*world);
  return Environment{*std::move(world),  *std::move(schedule),
                     *std::move(backbone), std::move(probes),
                     *std::move(adapters), hash};
}

std::string FormatMetricsRow(const RoundRecord& r) {
  return absl::StrCat(r.round, ",", Num(r.val_loss), ",", Num(r.val_identity),
                      ",", Num(r.val_temporal));
}

absl::StatusOr<RunOutput> RunExperiment(const ExperimentConfig& config,
                                        std::ostream* log) {
  absl::StatusOr<Environment> env = BuildEnvironment(config);
  if (!env.ok()) return env.status();
  return RunExperiment(config, *env, log);
}

absl::StatusOr<RunOutput> RunExperiment(const ExperimentConfig& config,
                                        const Environment& env,
                                        std::ostream* log) {
  if (absl::Status s = config.Validate(); !s.ok()) return s;
  FederationConfig federation = config.federation;
  federation.seed = config.seed;

  const bool write = !config.out_dir.empty();
  const std::filesystem::path out(config.out_dir);
  std::ofstream csv;
  if (write) {
    if (absl::Status s = EnsureDirectory(out / "checkpoints"); !s.ok()) {
      return s;
    }
    if (absl::Status s = WriteBinaryFile((out / kResolvedConfigFile).string(),
                                         SerializeConfig(config));
        !s.ok()) {
      return s;
    }
    csv.open(out / kMetricsFile, std::ios::binary | std::ios::trunc);
    if (!csv) {
      return absl::PermissionDeniedError(
          absl::StrCat("cannot write ", (out / kMetricsFile).string()));
    }
    csv << kMetricsHeader << "\n" << std::flush;
  }

  RoundObserver observer = [&](const RoundSummary& summary,
                               const AdapterSet&) -> absl::Status {
    if (write) {
      csv << FormatMetricsRow(summary.record) << "\n" << std::flush;
      if (!csv) return absl::DataLossError("failed writing the metrics CSV");
    }
    if (log != nullptr) {
      for (const std::string& w : summary.warnings) {
        *log << "warning: " << w << "\n";
      }
      *log << "round " << summary.record.round
           << " val_loss=" << Num(summary.record.val_loss)
           << " val_identity=" << Num(summary.record.val_identity)
           << " val_temporal=" << Num(summary.record.val_temporal)
           << " clients=" << summary.aggregated.size() << "\n";
    }
    return absl::OkStatus();
  };

  absl::StatusOr<FederationResult> result = RunFederation(
      env.view(), env.initial_adapters, federation, observer);
  if (!result.ok()) return result.status();
  if (write) {
    if (absl::Status s = WriteAdapterCheckpoint(
            result->best_adapters, (out / "checkpoints/best.adapters").string());
        !s.ok()) {
      return s;
    }
    if (absl::Status s = WriteAdapterCheckpoint(
            result->final_adapters,
            (out / "checkpoints/final.adapters").string());
        !s.ok()) {
      return s;
    }
  }
  return RunOutput{*std::move(result), env.world_hash};
}

std::string FormatSummary(std::span<const SummaryRow> rows) {
  std::string out =
      "name,status,best_round,val_loss,val_identity,val_temporal,"
      "final_jitter,world_hash\n";
  for (const SummaryRow& row : rows) {
    if (row.status.ok()) {
      absl::StrAppend(&out, row.name, ",ok,", row.best_round, ",",
                      Num(row.best.val_loss), ",", Num(row.best.val_identity),
                      ",", Num(row.best.val_temporal), ",",
                      Num(row.final_jitter), ",", Hex(row.world_hash), "\n");
    } else {
      absl::StrAppend(&out, row.name, ",failed,,,,,,", Hex(row.world_hash),
                      "\n");
    }
  }
  return out;
}

absl::StatusOr<std::vector<SummaryRow>> RunVariants(
    const ExperimentConfig& base, std::span<const NamedConfig> variants,
    std::ostream* log) {
  absl::StatusOr<Environment> env = BuildEnvironment(base);
  if (!env.ok()) return env.status();
  std::vector<SummaryRow> rows;
  for (const NamedConfig& variant : variants) {
    ExperimentConfig config = variant.config;
    if (!base.out_dir.empty()) {
      config.out_dir =
          (std::filesystem::path(base.out_dir) / variant.name).string();
    }
    if (log != nullptr) *log << "== " << variant.name << "\n";
    SummaryRow row;
    row.name = variant.name;
    row.world_hash = env->world_hash;
    absl::StatusOr<RunOutput> run = RunExperiment(config, *env, log);
    if (run.ok()) {
      const FederationResult& r = run->result;
      row.best_round = r.best_round;
      row.best = r.log[r.best_round - 1];
      row.final_jitter = r.rounds.back().val_jitter;
    } else {
      row.status = run.status();
      if (log != nullptr) {
        *log << "variant " << variant.name
             << " failed: " << run.status().ToString() << "\n";
      }
    }
    rows.push_back(std::move(row));
  }
  if (!base.out_dir.empty()) {
    if (absl::Status s = EnsureDirectory(base.out_dir); !s.ok()) return s;
    if (absl::Status s = WriteBinaryFile(
            (std::filesystem::path(base.out_dir) / kSummaryFile).string(),
            FormatSummary(rows));
        !s.ok()) {
      return s;
    }
  }
  return rows;
}

std::vector<NamedConfig> StrategyVariants(const ExperimentConfig& base,
                                          std::span<const Strategy> strategies) {
  std::vector<NamedConfig> out;
  for (Strategy s : strategies) {
    ExperimentConfig config = base;
    config.federation.strategy = s;
    out.push_back({StrategyName(s), std::move(config)});
  }
  return out;
}

std::vector<NamedConfig> AblationVariants(const ExperimentConfig& base) {
  ExperimentConfig adapters_only = base;
  adapters_only.federation.strategy = Strategy::kIsfa;
  adapters_only.federation.gamma = 0.0;
  adapters_only.federation.local.weights.tdc = 0.0;
  adapters_only.federation.dp.enabled = false;

  ExperimentConfig plus_dp = adapters_only;
  plus_dp.federation.dp.enabled = true;
  ExperimentConfig plus_isfa = adapters_only;
  plus_isfa.federation.gamma = base.federation.gamma;
  ExperimentConfig plus_tdc = adapters_only;
  plus_tdc.federation.local.weights.tdc = base.federation.local.weights.tdc;
  ExperimentConfig full = plus_isfa;
  full.federation.local.weights.tdc = base.federation.local.weights.tdc;
  full.federation.dp.enabled = true;

  return {{"adapters_only", adapters_only},
          {"plus_dp", plus_dp},
          {"plus_isfa", plus_isfa},
          {"plus_tdc", plus_tdc},
          {"full", full}};
}

}  // namespace fedtalk
