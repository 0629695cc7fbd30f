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
#include "fedtalk/synthdata.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "absl/strings/str_cat.h"
#include "fedtalk/binary_io.h"

namespace fedtalk {
namespace {

constexpr std::string_view kWorldMagic = "FTWORLD1";
constexpr int64_t kMaxIdentities = 1 << 20;

Vector UnitVector(int dim, Rng& rng) {
  Vector v = GaussianVector(dim, 1.0, rng);
  double norm = v.norm();
  while (!(norm > 0.0)) {
    v = GaussianVector(dim, 1.0, rng);
    norm = v.norm();
  }
  return v / norm;
}

Matrix ConditioningSequence(const WorldConfig& config, Rng& rng) {
  Matrix cond(config.frames, config.cond_dim);
  const double rho = config.cond_smoothness;
  const double innovation = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  for (int d = 0; d < config.cond_dim; ++d) cond(0, d) = rng.Normal();
  for (int f = 1; f < config.frames; ++f) {
    for (int d = 0; d < config.cond_dim; ++d) {
      cond(f, d) = rho * cond(f - 1, d) + innovation * rng.Normal();
    }
  }
  return cond;
}

LatentClip MakeClip(const World& world, const Identity& shown,
                    const Identity& conditioned, Rng& rng) {
  const WorldConfig& config = world.config;
  LatentClip clip;
  clip.cond = ConditioningSequence(config, rng);
  clip.frames.resize(config.frames, config.latent_dim);
  for (int f = 0; f < config.frames; ++f) {
    const double drive = world.motion_in.dot(clip.cond.row(f).transpose());
    for (int d = 0; d < config.latent_dim; ++d) {
      clip.frames(f, d) = shown.reference_frame[d] +
                          config.motion_scale * drive * world.motion_out[d] +
                          config.data_noise * rng.Normal();
    }
  }
  clip.identity_id = shown.id;
  clip.cond_identity_id = conditioned.id;
  clip.identity_embedding = conditioned.embedding;
  clip.reference_frame = shown.reference_frame;
  return clip;
}

void EncodeClip(const LatentClip& clip, BinaryWriter& w) {
  w.U64(static_cast<uint64_t>(clip.identity_id));
  w.U64(static_cast<uint64_t>(clip.cond_identity_id));
  w.F64s({clip.frames.data(), static_cast<size_t>(clip.frames.size())});
  w.F64s({clip.cond.data(), static_cast<size_t>(clip.cond.size())});
  w.F64s({clip.identity_embedding.data(),
          static_cast<size_t>(clip.identity_embedding.size())});
  w.F64s({clip.reference_frame.data(),
          static_cast<size_t>(clip.reference_frame.size())});
}

absl::StatusOr<LatentClip> DecodeClip(const WorldConfig& config,
                                      BinaryReader& r) {
  LatentClip clip;
  absl::StatusOr<uint64_t> id = r.U64();
  absl::StatusOr<uint64_t> cond_id = r.U64();
  if (!id.ok()) return id.status();
  if (!cond_id.ok()) return cond_id.status();
  clip.identity_id = static_cast<int>(*id);
  clip.cond_identity_id = static_cast<int>(*cond_id);
  clip.frames.resize(config.frames, config.latent_dim);
  clip.cond.resize(config.frames, config.cond_dim);
  clip.identity_embedding.resize(config.identity_dim);
  clip.reference_frame.resize(config.latent_dim);
  for (auto span : {std::span<double>(clip.frames.data(), clip.frames.size()),
                    std::span<double>(clip.cond.data(), clip.cond.size()),
                    std::span<double>(clip.identity_embedding.data(),
                                      clip.identity_embedding.size()),
                    std::span<double>(clip.reference_frame.data(),
                                      clip.reference_frame.size())}) {
    if (absl::Status s = r.F64s(span); !s.ok()) return s;
  }
  return clip;
}

}  // namespace

absl::Status WorldConfig::Validate() const {
  if (num_clients < 1) {
    return absl::InvalidArgumentError("world needs at least one client");
  }
  if (identities_per_client < 1 || clips_per_client < 1 || frames < 2 ||
      latent_dim < 1 || cond_dim < 1 || identity_dim < 1) {
    return absl::InvalidArgumentError(
        "world counts must be positive and clips need at least two frames");
  }
  if (static_cast<int64_t>(num_clients) * identities_per_client +
          public_identities >
      kMaxIdentities) {
    return absl::InvalidArgumentError(
        absl::StrCat("more identities requested than representable (max ",
                     kMaxIdentities, ")"));
  }
  if (public_identities < 0 || public_clips < 0 ||
      (public_clips > 0 && public_identities == 0)) {
    return absl::InvalidArgumentError(
        "public clips require at least one public identity");
  }
  if (!(data_noise >= 0.0) || !(motion_scale >= 0.0) ||
      !(appearance_scale > 0.0)) {
    return absl::InvalidArgumentError(
        "data_noise and motion_scale must be >= 0, appearance_scale > 0");
  }
  if (!(cond_smoothness >= 0.0 && cond_smoothness <= 1.0) ||
      !(unreliable_fraction >= 0.0 && unreliable_fraction <= 1.0) ||
      !(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    return absl::InvalidArgumentError(
        "cond_smoothness and unreliable_fraction must lie in [0, 1], "
        "validation_fraction in [0, 1)");
  }
  if (unreliable_fraction > 0.0 &&
      num_clients * identities_per_client + public_identities < 2) {
    return absl::InvalidArgumentError(
        "label shuffling needs at least two identities");
  }
  return absl::OkStatus();
}

absl::StatusOr<World> GenerateWorld(const WorldConfig& config, uint64_t seed) {
  if (absl::Status s = config.Validate(); !s.ok()) return s;
  World world;
  world.config = config;
  world.seed = seed;

  Rng structure_rng(DeriveSeed(seed, {kTagWorld, 0}));
  world.appearance = GaussianMatrix(config.latent_dim, config.identity_dim,
                                    config.appearance_scale, structure_rng);
  world.motion_in = UnitVector(config.cond_dim, structure_rng);
  world.motion_out = GaussianVector(config.latent_dim, 1.0, structure_rng);

  const int client_identities = config.num_clients * config.identities_per_client;
  const int total_identities = client_identities + config.public_identities;
  Rng identity_rng(DeriveSeed(seed, {kTagWorld, 1}));
  world.identities.reserve(total_identities);
  for (int id = 0; id < total_identities; ++id) {
    Identity identity;
    identity.id = id;
    identity.embedding = UnitVector(config.identity_dim, identity_rng);
    identity.reference_frame = world.appearance * identity.embedding;
    world.identities.push_back(std::move(identity));
  }

  // Unreliable clients: a seeded subset of size round(fraction * K).
  std::vector<bool> unreliable(config.num_clients, false);
  {
    Rng pick_rng(DeriveSeed(seed, {kTagWorld, 2}));
    const int count = static_cast<int>(
        std::lround(config.unreliable_fraction * config.num_clients));
    std::vector<int> order(config.num_clients);
    std::iota(order.begin(), order.end(), 0);
    for (int i = 0; i < count; ++i) {
      const int j = i + static_cast<int>(pick_rng.UniformInt(
                            static_cast<uint64_t>(config.num_clients - i)));
      std::swap(order[i], order[j]);
      unreliable[order[i]] = true;
    }
  }

  const int num_validation =
      config.clips_per_client >= 2
          ? std::max(1, static_cast<int>(std::floor(config.validation_fraction *
                                                    config.clips_per_client)))
          : 0;
  for (int k = 0; k < config.num_clients; ++k) {
    Rng rng(DeriveSeed(seed, {kTagWorld, 3, static_cast<uint64_t>(k)}));
    ClientDataset dataset;
    dataset.client_id = k;
    dataset.unreliable = unreliable[k];
    dataset.num_train = config.clips_per_client - num_validation;

    // Label shuffling maps each owned identity to a fixed different one.
    std::vector<int> owned(config.identities_per_client);
    std::vector<int> label(config.identities_per_client);
    for (int i = 0; i < config.identities_per_client; ++i) {
      owned[i] = k * config.identities_per_client + i;
      label[i] = owned[i];
      if (dataset.unreliable) {
        int other = static_cast<int>(
            rng.UniformInt(static_cast<uint64_t>(total_identities - 1)));
        if (other >= owned[i]) ++other;
        label[i] = other;
      }
    }
    dataset.clips.reserve(config.clips_per_client);
    for (int c = 0; c < config.clips_per_client; ++c) {
      const int slot = c % config.identities_per_client;
      dataset.clips.push_back(MakeClip(world, world.identities[owned[slot]],
                                       world.identities[label[slot]], rng));
    }
    world.clients.push_back(std::move(dataset));
  }

  Rng public_rng(DeriveSeed(seed, {kTagWorld, 4}));
  world.public_clips.reserve(config.public_clips);
  for (int c = 0; c < config.public_clips; ++c) {
    const Identity& identity =
        world.identities[client_identities + c % config.public_identities];
    world.public_clips.push_back(MakeClip(world, identity, identity, public_rng));
  }
  return world;
}

std::string EncodeWorld(const World& world) {
  const WorldConfig& c = world.config;
  BinaryWriter w;
  w.Magic(kWorldMagic);
  w.U64(world.seed);
  for (int v : {c.num_clients, c.identities_per_client, c.clips_per_client,
                c.frames, c.latent_dim, c.cond_dim, c.identity_dim,
                c.public_identities, c.public_clips}) {
    w.U64(static_cast<uint64_t>(v));
  }
  for (double v : {c.data_noise, c.motion_scale, c.cond_smoothness,
                   c.appearance_scale, c.unreliable_fraction,
                   c.validation_fraction}) {
    w.F64(v);
  }
  w.F64s({world.appearance.data(), static_cast<size_t>(world.appearance.size())});
  w.F64s({world.motion_in.data(), static_cast<size_t>(world.motion_in.size())});
  w.F64s({world.motion_out.data(), static_cast<size_t>(world.motion_out.size())});
  w.U64(world.identities.size());
  for (const Identity& identity : world.identities) {
    w.U64(static_cast<uint64_t>(identity.id));
    w.F64s({identity.embedding.data(),
            static_cast<size_t>(identity.embedding.size())});
    w.F64s({identity.reference_frame.data(),
            static_cast<size_t>(identity.reference_frame.size())});
  }
  for (const ClientDataset& client : world.clients) {
    w.U64(static_cast<uint64_t>(client.client_id));
    w.U64(client.clips.size());
    w.U64(static_cast<uint64_t>(client.num_train));
    w.U64(client.unreliable ? 1 : 0);
    for (const LatentClip& clip : client.clips) EncodeClip(clip, w);
  }
  for (const LatentClip& clip : world.public_clips) EncodeClip(clip, w);
  return w.data();
}

absl::StatusOr<World> DecodeWorld(std::string_view data) {
  BinaryReader r(data);
  if (absl::Status s = r.ExpectMagic(kWorldMagic); !s.ok()) return s;
  World world;
  WorldConfig& c = world.config;
  std::vector<uint64_t> header(10);
  for (uint64_t& v : header) {
    absl::StatusOr<uint64_t> x = r.U64();
    if (!x.ok()) return x.status();
    v = *x;
  }
  world.seed = header[0];
  c.num_clients = static_cast<int>(header[1]);
  c.identities_per_client = static_cast<int>(header[2]);
  c.clips_per_client = static_cast<int>(header[3]);
  c.frames = static_cast<int>(header[4]);
  c.latent_dim = static_cast<int>(header[5]);
  c.cond_dim = static_cast<int>(header[6]);
  c.identity_dim = static_cast<int>(header[7]);
  c.public_identities = static_cast<int>(header[8]);
  c.public_clips = static_cast<int>(header[9]);
  for (double* v : {&c.data_noise, &c.motion_scale, &c.cond_smoothness,
                    &c.appearance_scale, &c.unreliable_fraction,
                    &c.validation_fraction}) {
    absl::StatusOr<double> x = r.F64();
    if (!x.ok()) return x.status();
    *v = *x;
  }
  if (absl::Status s = c.Validate(); !s.ok()) {
    return absl::DataLossError(
        absl::StrCat("world header is invalid: ", s.message()));
  }
  world.appearance.resize(c.latent_dim, c.identity_dim);
  world.motion_in.resize(c.cond_dim);
  world.motion_out.resize(c.latent_dim);
  for (auto span : {std::span<double>(world.appearance.data(),
                                      world.appearance.size()),
                    std::span<double>(world.motion_in.data(),
                                      world.motion_in.size()),
                    std::span<double>(world.motion_out.data(),
                                      world.motion_out.size())}) {
    if (absl::Status s = r.F64s(span); !s.ok()) return s;
  }
  absl::StatusOr<uint64_t> num_identities = r.U64();
  if (!num_identities.ok()) return num_identities.status();
  if (*num_identities != static_cast<uint64_t>(
                             c.num_clients * c.identities_per_client +
                             c.public_identities)) {
    return absl::DataLossError("identity count does not match header");
  }
  for (uint64_t i = 0; i < *num_identities; ++i) {
    Identity identity;
    absl::StatusOr<uint64_t> id = r.U64();
    if (!id.ok()) return id.status();
    identity.id = static_cast<int>(*id);
    identity.embedding.resize(c.identity_dim);
    identity.reference_frame.resize(c.latent_dim);
    if (absl::Status s = r.F64s({identity.embedding.data(),
                                 static_cast<size_t>(c.identity_dim)});
        !s.ok()) {
      return s;
    }
    if (absl::Status s = r.F64s({identity.reference_frame.data(),
                                 static_cast<size_t>(c.latent_dim)});
        !s.ok()) {
      return s;
    }
    world.identities.push_back(std::move(identity));
  }
  for (int k = 0; k < c.num_clients; ++k) {
    ClientDataset client;
    std::vector<uint64_t> fields(4);
    for (uint64_t& v : fields) {
      absl::StatusOr<uint64_t> x = r.U64();
      if (!x.ok()) return x.status();
      v = *x;
    }
    client.client_id = static_cast<int>(fields[0]);
    client.num_train = static_cast<int>(fields[2]);
    client.unreliable = fields[3] != 0;
    if (fields[1] != static_cast<uint64_t>(c.clips_per_client) ||
        fields[2] > fields[1]) {
      return absl::DataLossError("client clip counts do not match header");
    }
    for (uint64_t i = 0; i < fields[1]; ++i) {
      absl::StatusOr<LatentClip> clip = DecodeClip(c, r);
      if (!clip.ok()) return clip.status();
      client.clips.push_back(*std::move(clip));
    }
    world.clients.push_back(std::move(client));
  }
  for (int i = 0; i < c.public_clips; ++i) {
    absl::StatusOr<LatentClip> clip = DecodeClip(c, r);
    if (!clip.ok()) return clip.status();
    world.public_clips.push_back(*std::move(clip));
  }
  if (!r.AtEnd()) return absl::DataLossError("trailing bytes in world file");
  return world;
}

absl::Status WriteWorld(const World& world, const std::string& path) {
  return WriteBinaryFile(path, EncodeWorld(world));
}

absl::StatusOr<World> ReadWorld(const std::string& path) {
  absl::StatusOr<std::string> data = ReadBinaryFile(path);
  if (!data.ok()) return data.status();
  return DecodeWorld(*data);
}

uint64_t WorldHash(const World& world) { return Fnv1a64(EncodeWorld(world)); }

absl::StatusOr<std::vector<BatchItem>> SampleBatch(
    std::span<const LatentClip> clips, int batch_size, int diffusion_steps,
    Rng& rng) {
  if (clips.empty()) {
    return absl::FailedPreconditionError("training split is empty");
  }
  if (batch_size < 1 || diffusion_steps < 1) {
    return absl::InvalidArgumentError(
        "batch size and diffusion steps must be positive");
  }
  std::vector<BatchItem> batch;
  batch.reserve(batch_size);
  for (int i = 0; i < batch_size; ++i) {
    BatchItem item;
    item.clip = &clips[rng.UniformInt(clips.size())];
    item.t = static_cast<int>(
        rng.UniformInt(static_cast<uint64_t>(diffusion_steps)));
    Rng noise_rng(rng.NextU64());
    item.noise = GaussianMatrix(item.clip->frames.rows(),
                                item.clip->frames.cols(), 1.0, noise_rng);
    batch.push_back(std::move(item));
  }
  return batch;
}

absl::StatusOr<std::vector<BatchItem>> SampleBatch(
    const ClientDataset& dataset, int batch_size, int diffusion_steps,
    Rng& rng) {
  return SampleBatch(dataset.train(), batch_size, diffusion_steps, rng);
}

}  // namespace fedtalk
