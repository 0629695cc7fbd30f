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
// Command-line runner: `fedtalk run|compare|ablate --config FILE [flags]`.
// Exit codes: 0 success, 2 invalid configuration or arguments, 3 run failure.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "fedtalk/config.h"
#include "fedtalk/experiment.h"
#include "fedtalk/server.h"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRun = 3;

struct Overrides {
  std::string config_path;
  std::optional<std::string> seed, rounds, strategy, gamma, clip_norm,
      noise_multiplier, secure_agg, client_fraction, out;
  bool quiet = false;
};

void AddCommonFlags(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config_path, "Configuration file")->required();
  app->add_option("--seed", o.seed, "Run seed");
  app->add_option("--rounds", o.rounds, "Federated rounds T");
  app->add_option("--strategy", o.strategy, "fedavg, fedprox or isfa");
  app->add_option("--gamma", o.gamma, "ISFA sharpness");
  app->add_option("--clip-norm", o.clip_norm,
                  "DP clip norm C (enables client-level DP)");
  app->add_option("--noise-multiplier", o.noise_multiplier,
                  "DP noise multiplier (enables client-level DP)");
  app->add_option("--secure-agg", o.secure_agg, "Pairwise masking on/off");
  app->add_option("--client-fraction", o.client_fraction,
                  "Fraction p of clients sampled per round");
  app->add_option("--out", o.out, "Output directory");
  app->add_flag("--quiet", o.quiet, "Suppress per-round progress");
}

absl::StatusOr<fedtalk::ExperimentConfig> Resolve(const Overrides& o) {
  absl::StatusOr<fedtalk::ExperimentConfig> config =
      fedtalk::LoadConfig(o.config_path);
  if (!config.ok()) return config.status();
  if (absl::Status s = fedtalk::ApplyEnvironmentOverrides(*config); !s.ok()) {
    return s;
  }
  const std::pair<const std::optional<std::string>*, const char*> flags[] = {
      {&o.seed, "seed"},
      {&o.rounds, "federation.rounds"},
      {&o.strategy, "federation.strategy"},
      {&o.gamma, "federation.gamma"},
      {&o.clip_norm, "privacy.clip_norm"},
      {&o.noise_multiplier, "privacy.noise_multiplier"},
      {&o.secure_agg, "federation.secure_agg"},
      {&o.client_fraction, "federation.client_fraction"},
      {&o.out, "out"},
  };
  for (const auto& [value, key] : flags) {
    if (!value->has_value()) continue;
    if (absl::Status s = fedtalk::SetConfigValue(*config, key, **value);
        !s.ok()) {
      return s;
    }
  }
  if (o.clip_norm || o.noise_multiplier) config->federation.dp.enabled = true;
  if (absl::Status s = config->Validate(); !s.ok()) return s;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated diffusion adapter training simulator"};
  app.require_subcommand(1);

  Overrides run_flags, compare_flags, ablate_flags;
  std::vector<std::string> strategy_names{"fedavg", "fedprox", "isfa"};
  CLI::App* run = app.add_subcommand("run", "Train one configuration");
  AddCommonFlags(run, run_flags);
  CLI::App* compare =
      app.add_subcommand("compare", "Run several strategies on one world");
  AddCommonFlags(compare, compare_flags);
  compare->add_option("--strategies", strategy_names,
                      "Strategies to compare")
      ->delimiter(',');
  CLI::App* ablate =
      app.add_subcommand("ablate", "Run the five-variant ablation matrix");
  AddCommonFlags(ablate, ablate_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  const Overrides& flags = run->parsed()       ? run_flags
                           : compare->parsed() ? compare_flags
                                               : ablate_flags;
  absl::StatusOr<fedtalk::ExperimentConfig> config = Resolve(flags);
  if (!config.ok()) {
    std::cerr << "config error: " << config.status().message() << "\n";
    return kExitConfig;
  }
  std::ostream* log = flags.quiet ? nullptr : &std::cerr;

  if (run->parsed()) {
    absl::StatusOr<fedtalk::RunOutput> out = fedtalk::RunExperiment(*config, log);
    if (!out.ok()) {
      std::cerr << "run failed: " << out.status() << "\n";
      return kExitRun;
    }
    const fedtalk::RoundRecord& best =
        out->result.log[out->result.best_round - 1];
    std::cout << "best_round=" << out->result.best_round
              << " val_loss=" << best.val_loss
              << " val_identity=" << best.val_identity
              << " val_temporal=" << best.val_temporal << "\n";
    return 0;
  }

  std::vector<fedtalk::NamedConfig> variants;
  if (compare->parsed()) {
    std::vector<fedtalk::Strategy> strategies;
    for (const std::string& name : strategy_names) {
      absl::StatusOr<fedtalk::Strategy> s = fedtalk::ParseStrategy(name);
      if (!s.ok()) {
        std::cerr << "config error: " << s.status().message() << "\n";
        return kExitConfig;
      }
      strategies.push_back(*s);
    }
    variants = fedtalk::StrategyVariants(*config, strategies);
  } else {
    variants = fedtalk::AblationVariants(*config);
  }
  absl::StatusOr<std::vector<fedtalk::SummaryRow>> rows =
      fedtalk::RunVariants(*config, variants, log);
  if (!rows.ok()) {
    std::cerr << "run failed: " << rows.status() << "\n";
    return kExitRun;
  }
  std::cout << fedtalk::FormatSummary(*rows);
  for (const fedtalk::SummaryRow& row : *rows) {
    if (!row.status.ok()) return kExitRun;
  }
  return 0;
}
