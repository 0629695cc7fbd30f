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
#include "fedtalk/server.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include "absl/strings/str_cat.h"
#include "fedtalk/random.h"

namespace fedtalk {

absl::StatusOr<Strategy> ParseStrategy(std::string_view name) {
  if (name == "fedavg") return Strategy::kFedAvg;
  if (name == "fedprox") return Strategy::kFedProx;
  if (name == "isfa") return Strategy::kIsfa;
  return absl::InvalidArgumentError(absl::StrCat(
      "unknown strategy '", std::string(name),
      "' (expected fedavg, fedprox or isfa)"));
}

std::string StrategyName(Strategy strategy) {
  switch (strategy) {
    case Strategy::kFedAvg:
      return "fedavg";
    case Strategy::kFedProx:
      return "fedprox";
    case Strategy::kIsfa:
      return "isfa";
  }
  return "unknown";
}

absl::Status FederationConfig::Validate(const NoiseSchedule& schedule) const {
  if (num_rounds < 1) {
    return absl::InvalidArgumentError("rounds must be at least 1");
  }
  if (!(client_fraction > 0.0 && client_fraction <= 1.0)) {
    return absl::InvalidArgumentError("client_fraction must lie in (0, 1]");
  }
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    return absl::InvalidArgumentError("gamma must be finite and nonnegative");
  }
  if (!(eta > 0.0) || !std::isfinite(eta)) {
    return absl::InvalidArgumentError("eta must be positive and finite");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    return absl::InvalidArgumentError("dropout_rate must lie in [0, 1)");
  }
  if (workers < 1) {
    return absl::InvalidArgumentError("workers must be at least 1");
  }
  if (absl::Status s = dp.Validate(); !s.ok()) return s;
  if (absl::Status s = local.Validate(); !s.ok()) return s;
  if (absl::Status s = reliability.Validate(); !s.ok()) return s;
  return eval.Validate(schedule);
}

absl::StatusOr<std::vector<int>> SampleClients(std::span<const int> all_ids,
                                               double p, int round,
                                               uint64_t seed) {
  if (all_ids.empty()) {
    return absl::InvalidArgumentError("cannot sample from zero clients");
  }
  if (!(p > 0.0 && p <= 1.0)) {
    return absl::InvalidArgumentError("client fraction must lie in (0, 1]");
  }
  const size_t k = all_ids.size();
  const size_t m = std::clamp<size_t>(
      static_cast<size_t>(std::llround(p * static_cast<double>(k))), 1, k);
  std::vector<int> ids(all_ids.begin(), all_ids.end());
  Rng rng(DeriveSeed(seed, {kTagClientSampling, static_cast<uint64_t>(round)}));
  for (size_t i = 0; i < m; ++i) {
    std::swap(ids[i], ids[i + rng.UniformInt(k - i)]);
  }
  ids.resize(m);
  std::sort(ids.begin(), ids.end());
  return ids;
}

namespace {

absl::Status CheckUpdates(std::span<const ClientUpdate> updates) {
  if (updates.empty()) return absl::InvalidArgumentError("no client updates");
  for (const ClientUpdate& u : updates) {
    if (u.num_samples < 1) {
      return absl::InvalidArgumentError(
          absl::StrCat("client ", u.client_id, " reports n_k < 1"));
    }
  }
  return absl::OkStatus();
}

std::vector<double> Normalize(std::vector<double> raw) {
  double total = 0.0;
  for (double v : raw) total += v;
  for (double& v : raw) v /= total;
  return raw;
}

}  // namespace

absl::StatusOr<std::vector<double>> DataSizeWeights(
    std::span<const ClientUpdate> updates) {
  if (absl::Status s = CheckUpdates(updates); !s.ok()) return s;
  std::vector<double> raw;
  raw.reserve(updates.size());
  for (const ClientUpdate& u : updates) {
    raw.push_back(static_cast<double>(u.num_samples));
  }
  return Normalize(std::move(raw));
}

absl::StatusOr<std::vector<double>> IsfaWeights(
    std::span<const ClientUpdate> updates, double gamma) {
  if (absl::Status s = CheckUpdates(updates); !s.ok()) return s;
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    return absl::InvalidArgumentError("gamma must be finite and nonnegative");
  }
  double max_exponent = -INFINITY;
  for (const ClientUpdate& u : updates) {
    if (!std::isfinite(u.score)) {
      return absl::InvalidArgumentError("non-finite reliability score");
    }
    max_exponent = std::max(max_exponent, gamma * u.score);
  }
  std::vector<double> raw;
  raw.reserve(updates.size());
  for (const ClientUpdate& u : updates) {
    raw.push_back(static_cast<double>(u.num_samples) *
                  std::exp(gamma * u.score - max_exponent));
  }
  return Normalize(std::move(raw));
}

absl::StatusOr<AdapterSet> ApplyUpdate(const AdapterSet& global,
                                       std::span<const double> combined,
                                       double eta) {
  std::vector<double> flat = FlattenAdapters(global);
  if (combined.size() != flat.size()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "update length ", combined.size(), " differs from adapter length ",
        flat.size()));
  }
  for (size_t j = 0; j < flat.size(); ++j) {
    flat[j] += eta * combined[j];
    if (!std::isfinite(flat[j])) {
      return absl::InternalError("non-finite aggregate");
    }
  }
  return UnflattenAdapters(flat, global);
}

absl::StatusOr<AdapterSet> Aggregate(const AdapterSet& global,
                                     std::span<const ClientUpdate> updates,
                                     std::span<const double> weights,
                                     double eta) {
  if (updates.size() != weights.size()) {
    return absl::InvalidArgumentError("weight and update counts differ");
  }
  if (updates.empty()) return absl::InvalidArgumentError("no client updates");
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(std::abs(total - 1.0) <= 1e-9)) {
    return absl::InvalidArgumentError(
        absl::StrCat("aggregation weights sum to ", total));
  }
  const size_t length = global.flat_size();
  std::vector<double> combined(length, 0.0);
  for (size_t k = 0; k < updates.size(); ++k) {
    if (updates[k].delta.size() != length) {
      return absl::InvalidArgumentError(absl::StrCat(
          "client ", updates[k].client_id, " sent a delta of length ",
          updates[k].delta.size(), ", expected ", length));
    }
    for (size_t j = 0; j < length; ++j) {
      combined[j] += weights[k] * updates[k].delta[j];
    }
  }
  return ApplyUpdate(global, combined, eta);
}

namespace {

struct ClientOutcome {
  absl::Status status;
  std::vector<double> delta;  // protected
  double score = 0.0;
  int num_samples = 0;
  LossBreakdown train_terms;
};

ClientOutcome RunClient(const FederationEnv& env, const AdapterSet& global,
                        const FederationConfig& config, int round,
                        const ClientDataset& dataset) {
  ClientOutcome out;
  const uint64_t r = static_cast<uint64_t>(round);
  const uint64_t id = static_cast<uint64_t>(dataset.client_id);
  LocalTrainConfig local = config.local;
  if (config.strategy != Strategy::kFedProx) local.prox_mu = 0.0;

  absl::StatusOr<LocalTrainResult> trained = LocalTrain(
      *env.backbone, global, dataset, local, *env.schedule, *env.probes,
      DeriveSeed(config.seed, {kTagLocalTrain, r, id}));
  if (!trained.ok()) {
    out.status = trained.status();
    return out;
  }
  for (const LossBreakdown& step : trained->trace) out.train_terms += step;
  if (!trained->trace.empty()) {
    out.train_terms *= 1.0 / static_cast<double>(trained->trace.size());
  }

  if (config.dp.enabled) {
    Rng rng(DeriveSeed(config.seed, {kTagDpNoise, r, id}));
    absl::StatusOr<std::vector<double>> noised =
        ClipAndNoise(trained->delta, config.dp, rng);
    if (!noised.ok()) {
      out.status = noised.status();
      return out;
    }
    out.delta = *std::move(noised);
  } else {
    out.delta = std::move(trained->delta);
  }

  if (config.strategy == Strategy::kIsfa) {
    absl::StatusOr<ReliabilityScore> score = ComputeReliability(
        *env.backbone, trained->adapters, dataset.validation(), *env.probes,
        *env.schedule, config.reliability,
        DeriveSeed(config.seed, {kTagReliability, r, id}));
    if (!score.ok()) {
      out.status = score.status();
      return out;
    }
    out.score = score->s;
  }
  out.num_samples = dataset.n_k();
  return out;
}

std::vector<ClientOutcome> RunClients(const FederationEnv& env,
                                      const AdapterSet& global,
                                      const FederationConfig& config, int round,
                                      std::span<const int> ids) {
  std::vector<ClientOutcome> outcomes(ids.size());
  auto work = [&](size_t i) {
    outcomes[i] = RunClient(env, global, config, round,
                            env.world->clients[ids[i]]);
  };
  const size_t threads =
      std::min(ids.size(), static_cast<size_t>(config.workers));
  if (threads <= 1) {
    for (size_t i = 0; i < ids.size(); ++i) work(i);
    return outcomes;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (size_t i = next++; i < ids.size(); i = next++) work(i);
    });
  }
  for (std::thread& t : pool) t.join();
  return outcomes;
}

// Aggregates one round given the clients that finished local work. Returns
// the new global state or an error that aborts only this round.
absl::StatusOr<AdapterSet> AggregateRound(const AdapterSet& global,
                                          const FederationConfig& config,
                                          int round,
                                          std::vector<ClientUpdate> survivors,
                                          RoundSummary& summary) {
  absl::StatusOr<std::vector<double>> weights =
      config.strategy == Strategy::kIsfa
          ? IsfaWeights(survivors, config.gamma)
          : DataSizeWeights(survivors);
  if (!weights.ok()) return weights.status();

  std::vector<int> survivor_ids;
  for (const ClientUpdate& u : survivors) survivor_ids.push_back(u.client_id);

  // Upload-phase failures.
  std::vector<size_t> received;
  std::vector<int> received_ids, dropped_ids;
  for (size_t k = 0; k < survivors.size(); ++k) {
    bool drop = false;
    if (config.dropout_rate > 0.0) {
      Rng rng(DeriveSeed(config.seed,
                         {kTagDropout, static_cast<uint64_t>(round),
                          static_cast<uint64_t>(survivors[k].client_id)}));
      drop = rng.Uniform() < config.dropout_rate;
    }
    if (drop) {
      dropped_ids.push_back(survivors[k].client_id);
    } else {
      received.push_back(k);
      received_ids.push_back(survivors[k].client_id);
    }
  }
  if (received.empty()) {
    return absl::UnavailableError("every client dropped before upload");
  }
  double received_mass = 0.0;
  for (size_t k : received) received_mass += (*weights)[k];

  for (size_t k : received) {
    summary.aggregated.push_back(survivors[k].client_id);
    summary.scores.push_back(survivors[k].score);
    summary.weights.push_back(dropped_ids.empty()
                                  ? (*weights)[k]
                                  : (*weights)[k] / received_mass);
  }

  if (!config.secure_agg) {
    std::vector<ClientUpdate> kept;
    for (size_t k : received) kept.push_back(std::move(survivors[k]));
    return Aggregate(global, kept, summary.weights, config.eta);
  }

  // Weights are broadcast before upload; each client masks w_k * delta_k.
  absl::StatusOr<MaskingSession> session = MaskingSession::Create(
      config.seed, round, survivor_ids, global.flat_size());
  if (!session.ok()) return session.status();
  std::vector<double> sum(global.flat_size(), 0.0);
  for (size_t k : received) {
    std::vector<double> weighted = survivors[k].delta;
    if (weighted.size() != sum.size()) {
      return absl::InvalidArgumentError("client delta has the wrong length");
    }
    for (double& v : weighted) v *= (*weights)[k];
    absl::StatusOr<std::vector<double>> masked =
        MaskUpdate(weighted, survivors[k].client_id, *session);
    if (!masked.ok()) return masked.status();
    for (size_t j = 0; j < sum.size(); ++j) sum[j] += (*masked)[j];
  }
  absl::StatusOr<std::vector<double>> unmasked =
      UnmaskDropouts(sum, *session, received_ids, dropped_ids);
  if (!unmasked.ok()) return unmasked.status();
  if (!dropped_ids.empty()) {
    for (double& v : *unmasked) v /= received_mass;
  }
  return ApplyUpdate(global, *unmasked, config.eta);
}

}  // namespace

absl::StatusOr<FederationResult> RunFederation(const FederationEnv& env,
                                               const AdapterSet& initial,
                                               const FederationConfig& config,
                                               const RoundObserver& observer) {
  if (env.world == nullptr || env.backbone == nullptr ||
      env.schedule == nullptr || env.probes == nullptr) {
    return absl::InvalidArgumentError("incomplete federation environment");
  }
  if (absl::Status s = config.Validate(*env.schedule); !s.ok()) return s;
  if (absl::Status s = CheckCompatible(*env.backbone, initial); !s.ok()) {
    return s;
  }
  const World& world = *env.world;
  std::vector<int> all_ids;
  for (size_t k = 0; k < world.clients.size(); ++k) {
    if (world.clients[k].client_id != static_cast<int>(k)) {
      return absl::InvalidArgumentError("client ids must equal their index");
    }
    all_ids.push_back(static_cast<int>(k));
  }
  const std::vector<LatentClip> pool =
      ValidationPool(world, config.eval.clips, config.seed);
  if (pool.empty()) {
    return absl::FailedPreconditionError("no validation clips in the world");
  }
  const uint64_t eval_seed = DeriveSeed(config.seed, {kTagEval});

  FederationResult result{initial, initial, 0, {}, {}};
  AdapterSet global = initial;
  double best_loss = INFINITY;

  for (int round = 1; round <= config.num_rounds; ++round) {
    RoundSummary summary;
    absl::StatusOr<std::vector<int>> sampled = SampleClients(
        all_ids, config.client_fraction, round, config.seed);
    if (!sampled.ok()) return sampled.status();
    summary.sampled = *sampled;

    std::vector<ClientOutcome> outcomes =
        RunClients(env, global, config, round, *sampled);
    std::vector<ClientUpdate> survivors;
    LossBreakdown train_terms;
    for (size_t i = 0; i < outcomes.size(); ++i) {
      if (!outcomes[i].status.ok()) {
        summary.warnings.push_back(
            absl::StrCat("round ", round, ": client ", (*sampled)[i],
                         " dropped: ", outcomes[i].status.ToString()));
        continue;
      }
      train_terms += outcomes[i].train_terms;
      survivors.push_back({(*sampled)[i], std::move(outcomes[i].delta),
                           outcomes[i].score, outcomes[i].num_samples});
    }
    if (!survivors.empty()) {
      train_terms *= 1.0 / static_cast<double>(survivors.size());
      summary.train_terms = train_terms;
    }

    if (survivors.empty()) {
      summary.skipped = true;
      summary.warnings.push_back(absl::StrCat(
          "round ", round, " skipped: every sampled client failed"));
    } else {
      absl::StatusOr<AdapterSet> next = AggregateRound(
          global, config, round, std::move(survivors), summary);
      if (next.ok()) {
        global = *std::move(next);
      } else {
        summary.skipped = true;
        summary.aggregated.clear();
        summary.weights.clear();
        summary.scores.clear();
        summary.warnings.push_back(absl::StrCat("round ", round, " skipped: ",
                                                next.status().ToString()));
      }
    }

    absl::StatusOr<EvalResult> eval = EvalRound(
        *env.backbone, global, pool, *env.schedule, *env.probes,
        config.local.weights, config.eval, eval_seed, round);
    if (!eval.ok()) return eval.status();
    summary.record = eval->record;
    summary.val_terms = eval->terms;
    summary.val_jitter = eval->jitter;
    if (summary.record.val_loss < best_loss) {
      best_loss = summary.record.val_loss;
      result.best_adapters = global;
      result.best_round = round;
    }
    result.log.push_back(summary.record);
    if (observer) {
      if (absl::Status s = observer(summary, global); !s.ok()) return s;
    }
    result.rounds.push_back(std::move(summary));
  }
  result.final_adapters = std::move(global);
  return result;
}

}  // namespace fedtalk
