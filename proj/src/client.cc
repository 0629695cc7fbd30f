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
#include "fedtalk/client.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "absl/strings/str_cat.h"
#include "fedtalk/evaluation.h"
#include "fedtalk/random.h"
#include "fedtalk/tensor.h"

namespace fedtalk {

absl::Status LocalTrainConfig::Validate() const {
  if (local_epochs < 1) {
    return absl::InvalidArgumentError("local_epochs must be at least 1");
  }
  if (batch_size < 1) {
    return absl::InvalidArgumentError("batch_size must be at least 1");
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    return absl::InvalidArgumentError(
        "learning_rate must be finite and nonnegative");
  }
  if (!(prox_mu >= 0.0) || !std::isfinite(prox_mu)) {
    return absl::InvalidArgumentError("prox_mu must be finite and nonnegative");
  }
  return weights.Validate();
}

absl::StatusOr<LocalTrainResult> LocalTrain(const BackboneParams& backbone,
                                            const AdapterSet& global,
                                            const ClientDataset& dataset,
                                            const LocalTrainConfig& config,
                                            const NoiseSchedule& schedule,
                                            const FrozenProbes& probes,
                                            uint64_t seed) {
  if (absl::Status s = config.Validate(); !s.ok()) return s;
  if (absl::Status s = CheckCompatible(backbone, global); !s.ok()) return s;
  std::span<const LatentClip> train = dataset.train();
  if (train.empty()) {
    return absl::FailedPreconditionError(absl::StrCat(
        "client ", dataset.client_id, " has an empty training split"));
  }

  const std::vector<double> anchor = FlattenAdapters(global);
  std::vector<double> params = anchor;
  LocalTrainResult result{global, {}, {}};
  Rng rng(seed);
  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), size_t{0});

  for (int epoch = 0; epoch < config.local_epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.UniformInt(i)]);
    }
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(config.batch_size)) {
      const size_t end =
          std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      std::vector<BatchItem> batch;
      batch.reserve(end - start);
      for (size_t i = start; i < end; ++i) {
        const LatentClip& clip = train[order[i]];
        BatchItem item;
        item.clip = &clip;
        item.t = static_cast<int>(rng.UniformInt(schedule.steps()));
        item.noise =
            GaussianMatrix(clip.frames.rows(), clip.frames.cols(), 1.0, rng);
        batch.push_back(std::move(item));
      }

      absl::StatusOr<AdapterGradient> grad =
          AdapterGradients(backbone, result.adapters, batch, schedule, probes,
                           config.weights);
      if (!grad.ok()) {
        return absl::AbortedError(absl::StrCat("client ", dataset.client_id,
                                               ": ", grad.status().message()));
      }
      const std::vector<double> g = FlattenAdapters(grad->grad);
      double prox = 0.0;
      for (size_t j = 0; j < params.size(); ++j) {
        const double drift = params[j] - anchor[j];
        prox += drift * drift;
        params[j] -= config.learning_rate * (g[j] + config.prox_mu * drift);
      }
      LossBreakdown loss = grad->loss;
      loss.total += 0.5 * config.prox_mu * prox;
      result.trace.push_back(loss);
      if (!std::isfinite(loss.total) ||
          !std::all_of(params.begin(), params.end(),
                       [](double v) { return std::isfinite(v); })) {
        return absl::AbortedError(absl::StrCat(
            "client ", dataset.client_id, " diverged in local training"));
      }
      absl::StatusOr<AdapterSet> updated = UnflattenAdapters(params, global);
      if (!updated.ok()) return updated.status();
      result.adapters = *std::move(updated);
    }
  }

  result.delta.resize(params.size());
  for (size_t j = 0; j < params.size(); ++j) {
    result.delta[j] = params[j] - anchor[j];
  }
  return result;
}

absl::StatusOr<ReliabilityScore> ReliabilityScore::Combine(double id_sim,
                                                           double temp_stab,
                                                           double alpha_mix) {
  for (double v : {id_sim, temp_stab, alpha_mix}) {
    if (!(v >= 0.0 && v <= 1.0)) {
      return absl::InvalidArgumentError(
          absl::StrCat("reliability component outside [0, 1]: ", v));
    }
  }
  ReliabilityScore score;
  score.id_sim = id_sim;
  score.temp_stab = temp_stab;
  score.alpha_mix = alpha_mix;
  score.s = alpha_mix * id_sim + (1.0 - alpha_mix) * temp_stab;
  return score;
}

absl::Status ReliabilityConfig::Validate() const {
  if (!(alpha_mix >= 0.0 && alpha_mix <= 1.0)) {
    return absl::InvalidArgumentError("alpha_mix must lie in [0, 1]");
  }
  if (sampler_steps < 1) {
    return absl::InvalidArgumentError("reliability sampler needs >= 1 step");
  }
  return absl::OkStatus();
}

absl::StatusOr<ReliabilityScore> ComputeReliability(
    const BackboneParams& backbone, const AdapterSet& trained,
    std::span<const LatentClip> validation, const FrozenProbes& probes,
    const NoiseSchedule& schedule, const ReliabilityConfig& config,
    uint64_t seed) {
  if (absl::Status s = config.Validate(); !s.ok()) return s;
  if (validation.empty()) {
    return absl::FailedPreconditionError(
        "reliability needs a nonempty validation split");
  }
  double id_total = 0.0, jitter_total = 0.0;
  for (size_t i = 0; i < validation.size(); ++i) {
    const LatentClip& clip = validation[i];
    const SamplerConfig sampler{
        std::min(config.sampler_steps, schedule.steps()), config.stochastic,
        DeriveSeed(seed, {i})};
    absl::StatusOr<Matrix> generated =
        ReverseSample(backbone, trained, clip.cond, clip.identity_embedding,
                      schedule, sampler);
    if (!generated.ok()) return generated.status();
    absl::StatusOr<Vector> ref = probes.IdentityEmbedding(clip.reference_frame);
    if (!ref.ok()) return ref.status();
    absl::StatusOr<double> id = EvalIdentity(*generated, *ref, probes);
    if (!id.ok()) return id.status();
    absl::StatusOr<TemporalStats> temporal = EvalTemporal(*generated);
    if (!temporal.ok()) return temporal.status();
    id_total += *id;
    jitter_total += temporal->jitter;
  }
  const double n = static_cast<double>(validation.size());
  return ReliabilityScore::Combine(id_total / n,
                                   1.0 / (1.0 + jitter_total / n),
                                   config.alpha_mix);
}

}  // namespace fedtalk
