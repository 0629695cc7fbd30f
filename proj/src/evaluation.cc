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
#include "fedtalk/evaluation.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "absl/strings/str_cat.h"

namespace fedtalk {

absl::Status SamplerConfig::Validate(const NoiseSchedule& schedule) const {
  if (num_steps < 1 || num_steps > schedule.steps()) {
    return absl::InvalidArgumentError(
        absl::StrCat("sampler steps must lie in [1, ", schedule.steps(),
                     "], got ", num_steps));
  }
  return absl::OkStatus();
}

std::vector<int> SamplerTimesteps(int schedule_steps, int num_steps) {
  std::vector<int> steps(num_steps);
  for (int i = 0; i < num_steps; ++i) {
    steps[i] = static_cast<int>(
        (static_cast<int64_t>(i + 1) * schedule_steps) / num_steps - 1);
  }
  return steps;
}

absl::StatusOr<Matrix> ReverseSampleFrom(const NoisePredictor& predictor,
                                         const NoiseSchedule& schedule,
                                         const SamplerConfig& config,
                                         Matrix z_start) {
  if (absl::Status s = config.Validate(schedule); !s.ok()) return s;
  const std::vector<int> steps =
      SamplerTimesteps(schedule.steps(), config.num_steps);
  Rng rng(DeriveSeed(config.seed, {0x5A3B1E}));
  Matrix z = std::move(z_start);
  for (int i = config.num_steps - 1; i >= 0; --i) {
    const int t = steps[i];
    const int prev = i > 0 ? steps[i - 1] : -1;
    double alpha, beta;
    if (prev == t - 1) {
      alpha = schedule.alphas()[t];
      beta = schedule.betas()[t];
    } else {
      const double alpha_bar_prev =
          prev < 0 ? 1.0 : schedule.alpha_bars()[prev];
      alpha = schedule.alpha_bars()[t] / alpha_bar_prev;
      beta = 1.0 - alpha;
    }
    absl::StatusOr<Matrix> eps = predictor(z, t);
    if (!eps.ok()) return eps.status();
    if (eps->rows() != z.rows() || eps->cols() != z.cols()) {
      return absl::InternalError("noise predictor returned the wrong shape");
    }
    z = (z - (beta / std::sqrt(1.0 - schedule.alpha_bars()[t])) * *eps) /
        std::sqrt(alpha);
    if (config.stochastic && i > 0) {
      z += std::sqrt(beta) * GaussianMatrix(z.rows(), z.cols(), 1.0, rng);
    }
  }
  return z;
}

absl::StatusOr<Matrix> ReverseSample(const NoisePredictor& predictor,
                                     const NoiseSchedule& schedule,
                                     const SamplerConfig& config, int frames,
                                     int latent_dim) {
  Rng rng(config.seed);
  return ReverseSampleFrom(predictor, schedule, config,
                           GaussianMatrix(frames, latent_dim, 1.0, rng));
}

absl::StatusOr<Matrix> ReverseSample(const BackboneParams& backbone,
                                     const AdapterSet& adapters,
                                     const Matrix& cond, const Vector& ident,
                                     const NoiseSchedule& schedule,
                                     const SamplerConfig& config) {
  if (absl::Status s = CheckCompatible(backbone, adapters); !s.ok()) return s;
  // Merge the adapters once instead of per step.
  BackboneParams merged = backbone;
  for (int l = 0; l < BackboneParams::kNumLayers; ++l) {
    merged.weights[l] += adapters.EffectiveDelta(l);
  }
  NoisePredictor predictor = [&](const Matrix& z_t, int t) {
    return PredictNoise(merged, z_t, t, cond, ident);
  };
  return ReverseSample(predictor, schedule, config,
                       static_cast<int>(cond.rows()), backbone.dims.latent_dim);
}

absl::StatusOr<double> EvalIdentity(const Matrix& generated,
                                    const Vector& ref_embedding,
                                    const FrozenProbes& probes) {
  if (generated.rows() == 0) {
    return absl::InvalidArgumentError("cannot score an empty clip");
  }
  const Vector mean_frame = generated.colwise().mean().transpose();
  absl::StatusOr<Vector> embedding = probes.IdentityEmbedding(mean_frame);
  if (!embedding.ok()) return embedding.status();
  const double ref_norm = ref_embedding.norm();
  if (ref_embedding.size() != embedding->size() || !(ref_norm > 0.0)) {
    return absl::FailedPreconditionError(
        "reference embedding has the wrong size or zero norm");
  }
  const double cosine =
      std::clamp(embedding->dot(ref_embedding) / ref_norm, -1.0, 1.0);
  return 0.5 * (1.0 + cosine);
}

absl::StatusOr<TemporalStats> EvalTemporal(const Matrix& generated) {
  if (generated.rows() < 2) {
    return absl::InvalidArgumentError(
        "temporal stability needs at least two frames");
  }
  double total = 0.0;
  for (Eigen::Index f = 1; f < generated.rows(); ++f) {
    total += (generated.row(f) - generated.row(f - 1)).norm();
  }
  TemporalStats stats;
  stats.jitter = total / static_cast<double>(generated.rows() - 1);
  stats.stability = 1.0 / (1.0 + stats.jitter);
  return stats;
}

absl::Status EvalConfig::Validate(const NoiseSchedule& schedule) const {
  if (clips < 1 || draws < 1) {
    return absl::InvalidArgumentError(
        "evaluation needs at least one clip and one draw");
  }
  return SamplerConfig{sampler_steps, stochastic, 0}.Validate(schedule);
}

std::vector<LatentClip> ValidationPool(const World& world, int budget,
                                       uint64_t seed) {
  std::vector<const LatentClip*> all;
  for (const ClientDataset& client : world.clients) {
    for (const LatentClip& clip : client.validation()) all.push_back(&clip);
  }
  std::vector<size_t> chosen(all.size());
  std::iota(chosen.begin(), chosen.end(), size_t{0});
  if (budget >= 0 && static_cast<size_t>(budget) < all.size()) {
    Rng rng(DeriveSeed(seed, {kTagEval, 2}));
    for (size_t i = 0; i < static_cast<size_t>(budget); ++i) {
      const size_t j = i + rng.UniformInt(chosen.size() - i);
      std::swap(chosen[i], chosen[j]);
    }
    chosen.resize(budget);
    std::sort(chosen.begin(), chosen.end());
  }
  std::vector<LatentClip> pool;
  pool.reserve(chosen.size());
  for (size_t index : chosen) {
    LatentClip clip = *all[index];
    clip.cond_identity_id = clip.identity_id;
    clip.identity_embedding = world.identities[clip.identity_id].embedding;
    pool.push_back(std::move(clip));
  }
  return pool;
}

absl::StatusOr<EvalResult> EvalRound(const BackboneParams& backbone,
                                     const AdapterSet& adapters,
                                     std::span<const LatentClip> pool,
                                     const NoiseSchedule& schedule,
                                     const FrozenProbes& probes,
                                     const LossWeights& weights,
                                     const EvalConfig& config, uint64_t seed,
                                     int round) {
  if (pool.empty()) return absl::FailedPreconditionError("empty validation pool");
  if (absl::Status s = config.Validate(schedule); !s.ok()) return s;

  std::vector<BatchItem> items;
  items.reserve(pool.size() * config.draws);
  for (size_t j = 0; j < pool.size(); ++j) {
    Rng rng(DeriveSeed(seed, {kTagEval, 0, j}));
    for (int d = 0; d < config.draws; ++d) {
      BatchItem item;
      item.clip = &pool[j];
      item.t = static_cast<int>(rng.UniformInt(schedule.steps()));
      item.noise = GaussianMatrix(pool[j].frames.rows(), pool[j].frames.cols(),
                                  1.0, rng);
      items.push_back(std::move(item));
    }
  }
  absl::StatusOr<LossBreakdown> loss =
      EvaluateObjective(backbone, adapters, items, schedule, probes, weights);
  if (!loss.ok()) return loss.status();

  double identity_sum = 0.0, stability_sum = 0.0, jitter_sum = 0.0;
  for (size_t j = 0; j < pool.size(); ++j) {
    const SamplerConfig sampler{config.sampler_steps, config.stochastic,
                                DeriveSeed(seed, {kTagEval, 1, j})};
    absl::StatusOr<Matrix> generated =
        ReverseSample(backbone, adapters, pool[j].cond,
                      pool[j].identity_embedding, schedule, sampler);
    if (!generated.ok()) return generated.status();
    absl::StatusOr<Vector> ref = probes.IdentityEmbedding(pool[j].reference_frame);
    if (!ref.ok()) return ref.status();
    absl::StatusOr<double> identity = EvalIdentity(*generated, *ref, probes);
    if (!identity.ok()) return identity.status();
    absl::StatusOr<TemporalStats> temporal = EvalTemporal(*generated);
    if (!temporal.ok()) return temporal.status();
    identity_sum += *identity;
    stability_sum += temporal->stability;
    jitter_sum += temporal->jitter;
  }
  const double n = static_cast<double>(pool.size());
  EvalResult result;
  result.record = {round, loss->total, identity_sum / n, stability_sum / n};
  result.terms = *loss;
  result.jitter = jitter_sum / n;
  if (!std::isfinite(result.record.val_loss) ||
      !std::isfinite(result.record.val_identity) ||
      !std::isfinite(result.record.val_temporal)) {
    return absl::InternalError(
        absl::StrCat("non-finite validation metrics in round ", round));
  }
  return result;
}

}  // namespace fedtalk
