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
#ifndef FEDTALK_CLIENT_H_
#define FEDTALK_CLIENT_H_

#include <cstdint>
#include <span>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "fedtalk/denoiser.h"
#include "fedtalk/objectives.h"
#include "fedtalk/schedule.h"
#include "fedtalk/synthdata.h"

namespace fedtalk {

struct LocalTrainConfig {
  int local_epochs = 1;
  int batch_size = 4;
  double learning_rate = 0.2;
  // Proximal coefficient mu; the term (mu / 2) ||phi - phi_global||^2 is
  // part of the objective for every value, so mu = 0 is a true no-op.
  double prox_mu = 0.0;
  LossWeights weights;

  absl::Status Validate() const;
};

struct LocalTrainResult {
  AdapterSet adapters;
  // flatten(trained) - flatten(global).
  std::vector<double> delta;
  // Batch loss before each gradient step.
  std::vector<LossBreakdown> trace;
};

// Plain mini-batch gradient descent from the global adapters. Each epoch
// visits the training split once in a seeded random order; every batch item
// draws a fresh step and noise. The backbone is never modified.
absl::StatusOr<LocalTrainResult> LocalTrain(const BackboneParams& backbone,
                                            const AdapterSet& global,
                                            const ClientDataset& dataset,
                                            const LocalTrainConfig& config,
                                            const NoiseSchedule& schedule,
                                            const FrozenProbes& probes,
                                            uint64_t seed);

struct ReliabilityScore {
  double id_sim = 0.0;
  double temp_stab = 0.0;
  double alpha_mix = 0.5;
  // alpha_mix * id_sim + (1 - alpha_mix) * temp_stab.
  double s = 0.0;

  static absl::StatusOr<ReliabilityScore> Combine(double id_sim,
                                                  double temp_stab,
                                                  double alpha_mix);
};

struct ReliabilityConfig {
  double alpha_mix = 0.5;
  int sampler_steps = 10;
  bool stochastic = false;

  absl::Status Validate() const;
};

// Scores trained adapters on the client's own validation clips: one
// generated clip per item, conditioned on the client's labels and compared
// against the true reference frame.
absl::StatusOr<ReliabilityScore> ComputeReliability(
    const BackboneParams& backbone, const AdapterSet& trained,
    std::span<const LatentClip> validation, const FrozenProbes& probes,
    const NoiseSchedule& schedule, const ReliabilityConfig& config,
    uint64_t seed);

}  // namespace fedtalk

#endif  // FEDTALK_CLIENT_H_
