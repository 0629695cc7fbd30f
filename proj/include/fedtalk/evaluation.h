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
#ifndef FEDTALK_EVALUATION_H_
#define FEDTALK_EVALUATION_H_

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "fedtalk/denoiser.h"
#include "fedtalk/objectives.h"
#include "fedtalk/schedule.h"
#include "fedtalk/synthdata.h"
#include "fedtalk/tensor.h"

namespace fedtalk {

struct SamplerConfig {
  int num_steps = kDefaultDiffusionSteps;
  // Ancestral noise on intermediate steps.
  bool stochastic = true;
  uint64_t seed = 0;

  absl::Status Validate(const NoiseSchedule& schedule) const;
};

// Predicts the injected noise of z_t at diffusion step t.
using NoisePredictor =
    std::function<absl::StatusOr<Matrix>(const Matrix& z_t, int t)>;

// Diffusion steps visited by a sampler with `num_steps` steps, ascending.
// The last entry is always schedule_steps - 1; num_steps == schedule_steps
// visits every step.
std::vector<int> SamplerTimesteps(int schedule_steps, int num_steps);

// DDPM ancestral sampling from a given z_T. Between visited steps s > s' the
// update uses alpha = alpha_bar_s / alpha_bar_s' and beta = 1 - alpha
// (exactly the schedule's alpha_t and beta_t when s' = s - 1):
//   z' = (z - beta / sqrt(1 - alpha_bar_s) eps) / sqrt(alpha) + sqrt(beta) xi
// with the xi term dropped on the final step or when deterministic.
absl::StatusOr<Matrix> ReverseSampleFrom(const NoisePredictor& predictor,
                                         const NoiseSchedule& schedule,
                                         const SamplerConfig& config,
                                         Matrix z_start);

// Samples from a seeded standard-normal z_T of shape frames x latent_dim.
absl::StatusOr<Matrix> ReverseSample(const NoisePredictor& predictor,
                                     const NoiseSchedule& schedule,
                                     const SamplerConfig& config, int frames,
                                     int latent_dim);

// Generates a clip with the adapted denoiser. The latent decoder is the
// identity, so the result is the final latent.
absl::StatusOr<Matrix> ReverseSample(const BackboneParams& backbone,
                                     const AdapterSet& adapters,
                                     const Matrix& cond, const Vector& ident,
                                     const NoiseSchedule& schedule,
                                     const SamplerConfig& config);

// (1 + cos(g(mean frame), ref)) / 2, in [0, 1].
absl::StatusOr<double> EvalIdentity(const Matrix& generated,
                                    const Vector& ref_embedding,
                                    const FrozenProbes& probes);

struct TemporalStats {
  double stability = 1.0;  // 1 / (1 + jitter)
  double jitter = 0.0;     // mean L2 norm of consecutive-frame differences
};

absl::StatusOr<TemporalStats> EvalTemporal(const Matrix& generated);

// One row of val_metrics_all_rounds.csv.
struct RoundRecord {
  int round = 0;
  double val_loss = 0.0;
  double val_identity = 0.0;
  double val_temporal = 0.0;
};

struct EvalConfig {
  // Validation clips evaluated per round, chosen once per run.
  int clips = 8;
  // (t, noise) draws per clip for the validation objective.
  int draws = 4;
  int sampler_steps = kDefaultDiffusionSteps;
  bool stochastic = true;

  absl::Status Validate(const NoiseSchedule& schedule) const;
};

struct EvalResult {
  RoundRecord record;
  // Mean unweighted terms behind val_loss.
  LossBreakdown terms;
  double jitter = 0.0;
};

// A fixed subset of the union of client validation splits, with each clip's
// conditioning embedding reset to its true identity. At most `budget` clips,
// in client order.
std::vector<LatentClip> ValidationPool(const World& world, int budget,
                                       uint64_t seed);

// Scores the global adapters on the pool. The objective draws and sampler
// seeds depend only on (seed, clip index), so every round is measured on the
// same noise.
absl::StatusOr<EvalResult> EvalRound(const BackboneParams& backbone,
                                     const AdapterSet& adapters,
                                     std::span<const LatentClip> pool,
                                     const NoiseSchedule& schedule,
                                     const FrozenProbes& probes,
                                     const LossWeights& weights,
                                     const EvalConfig& config, uint64_t seed,
                                     int round);

}  // namespace fedtalk

#endif  // FEDTALK_EVALUATION_H_
