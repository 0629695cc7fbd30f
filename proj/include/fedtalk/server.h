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
#ifndef FEDTALK_SERVER_H_
#define FEDTALK_SERVER_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "fedtalk/client.h"
#include "fedtalk/denoiser.h"
#include "fedtalk/evaluation.h"
#include "fedtalk/objectives.h"
#include "fedtalk/privacy.h"
#include "fedtalk/schedule.h"
#include "fedtalk/synthdata.h"

namespace fedtalk {

enum class Strategy { kFedAvg, kFedProx, kIsfa };

absl::StatusOr<Strategy> ParseStrategy(std::string_view name);
std::string StrategyName(Strategy strategy);

struct FederationConfig {
  int num_rounds = 100;
  double client_fraction = 0.5;
  Strategy strategy = Strategy::kIsfa;
  double gamma = 5.0;
  double eta = 1.0;
  DpConfig dp;
  bool secure_agg = true;
  // Probability that a client which finished local training fails to
  // deliver its masked upload.
  double dropout_rate = 0.0;
  uint64_t seed = 0;
  // Client threads per round. Results do not depend on this.
  int workers = 1;
  // prox_mu only takes effect under fedprox.
  LocalTrainConfig local;
  ReliabilityConfig reliability;
  EvalConfig eval;

  absl::Status Validate(const NoiseSchedule& schedule) const;
};

// One client's upload. Under secure aggregation `delta` holds the masked,
// pre-weighted vector; otherwise the protected delta itself.
struct ClientUpdate {
  int client_id = 0;
  std::vector<double> delta;
  double score = 0.0;
  int num_samples = 1;
};

// Uniform sample without replacement of max(1, round(p K)) ids, sorted.
absl::StatusOr<std::vector<int>> SampleClients(std::span<const int> all_ids,
                                               double p, int round,
                                               uint64_t seed);

// n_k / sum n.
absl::StatusOr<std::vector<double>> DataSizeWeights(
    std::span<const ClientUpdate> updates);
// n_k exp(gamma s_k) / sum_j n_j exp(gamma s_j), max-shifted.
absl::StatusOr<std::vector<double>> IsfaWeights(
    std::span<const ClientUpdate> updates, double gamma);

// phi + eta * sum_k w_k delta_k, summed in the given order.
absl::StatusOr<AdapterSet> Aggregate(const AdapterSet& global,
                                     std::span<const ClientUpdate> updates,
                                     std::span<const double> weights,
                                     double eta);
// phi + eta * combined, for an already weighted and summed update.
absl::StatusOr<AdapterSet> ApplyUpdate(const AdapterSet& global,
                                       std::span<const double> combined,
                                       double eta);

// Shared read-only state of a run.
struct FederationEnv {
  const World* world = nullptr;
  const BackboneParams* backbone = nullptr;
  const NoiseSchedule* schedule = nullptr;
  const FrozenProbes* probes = nullptr;
};

struct RoundSummary {
  RoundRecord record;
  LossBreakdown val_terms;
  double val_jitter = 0.0;
  std::vector<int> sampled;
  // Clients whose update entered the aggregate, with their final weights
  // and scores (scores are only computed under isfa).
  std::vector<int> aggregated;
  std::vector<double> weights;
  std::vector<double> scores;
  // Mean local training loss of the aggregated clients.
  LossBreakdown train_terms;
  bool skipped = false;
  std::vector<std::string> warnings;
};

struct FederationResult {
  AdapterSet final_adapters;
  AdapterSet best_adapters;
  int best_round = 0;
  std::vector<RoundRecord> log;
  std::vector<RoundSummary> rounds;
};

// Called after every round with the new global state; a non-OK status stops
// the run and is returned.
using RoundObserver =
    std::function<absl::Status(const RoundSummary&, const AdapterSet&)>;

absl::StatusOr<FederationResult> RunFederation(
    const FederationEnv& env, const AdapterSet& initial,
    const FederationConfig& config, const RoundObserver& observer = {});

}  // namespace fedtalk

#endif  // FEDTALK_SERVER_H_
