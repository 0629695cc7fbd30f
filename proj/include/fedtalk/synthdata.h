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
#ifndef FEDTALK_SYNTHDATA_H_
#define FEDTALK_SYNTHDATA_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "fedtalk/random.h"
#include "fedtalk/tensor.h"

namespace fedtalk {

// Parameters of the synthetic non-IID world. Every client holds clips of its
// own identities only.
struct WorldConfig {
  int num_clients = 20;
  int identities_per_client = 2;
  int clips_per_client = 16;
  int frames = 8;
  int latent_dim = 16;
  int cond_dim = 4;
  int identity_dim = 8;
  // Per-coordinate stddev of the i.i.d. frame noise.
  double data_noise = 0.05;
  // Scale s of the conditioning-driven motion term.
  double motion_scale = 0.5;
  // AR(1) coefficient of the conditioning sequence; 1 holds it constant.
  double cond_smoothness = 0.8;
  // Entry stddev of the identity appearance map M.
  double appearance_scale = 0.7;
  // Fraction of clients whose conditioning identity labels are shuffled.
  double unreliable_fraction = 0.0;
  // Fraction of each client's clips held out (the trailing clips).
  double validation_fraction = 0.25;
  // Held-out identities and clips available for central backbone pretraining.
  int public_identities = 8;
  int public_clips = 64;

  absl::Status Validate() const;
};

struct Identity {
  int id = 0;
  // Unit-norm conditioning embedding e(r).
  Vector embedding;
  // Clean reference frame M e of this identity; the reference embedding used
  // by the identity losses is the probe embedding of this frame.
  Vector reference_frame;
};

struct LatentClip {
  // F x D clean latents z_0.
  Matrix frames;
  // F x E_c conditioning sequence c(a).
  Matrix cond;
  // Identity shown in the frames.
  int identity_id = 0;
  // Identity whose embedding conditions the clip; differs from identity_id
  // only on unreliable clients.
  int cond_identity_id = 0;
  Vector identity_embedding;
  Vector reference_frame;

  int num_frames() const { return static_cast<int>(frames.rows()); }
};

struct ClientDataset {
  int client_id = 0;
  // Training clips first, then validation clips.
  std::vector<LatentClip> clips;
  int num_train = 0;
  bool unreliable = false;

  // Sample count used for weighting: the number of training clips.
  int n_k() const { return num_train; }
  std::span<const LatentClip> train() const {
    return std::span<const LatentClip>(clips).first(num_train);
  }
  std::span<const LatentClip> validation() const {
    return std::span<const LatentClip>(clips).subspan(num_train);
  }
};

struct World {
  WorldConfig config;
  uint64_t seed = 0;
  std::vector<Identity> identities;
  std::vector<ClientDataset> clients;
  std::vector<LatentClip> public_clips;
  // Shared generative structure: z0_f = M e + s <u, c_f> v + noise.
  Matrix appearance;  // D x E_id
  Vector motion_in;   // E_c, unit norm
  Vector motion_out;  // D
};

absl::StatusOr<World> GenerateWorld(const WorldConfig& config, uint64_t seed);

// Flat little-endian binary form of a world (see README for the layout).
std::string EncodeWorld(const World& world);
absl::StatusOr<World> DecodeWorld(std::string_view data);
absl::Status WriteWorld(const World& world, const std::string& path);
absl::StatusOr<World> ReadWorld(const std::string& path);
// FNV-1a of the encoded world.
uint64_t WorldHash(const World& world);

// One training example: a clip with a diffusion step and an F x D noise draw.
struct BatchItem {
  const LatentClip* clip = nullptr;
  int t = 0;
  Matrix noise;
};

// Clips uniformly with replacement; per clip a uniform step in
// [0, diffusion_steps) and standard-normal noise from a per-clip sub-seed.
absl::StatusOr<std::vector<BatchItem>> SampleBatch(
    std::span<const LatentClip> clips, int batch_size, int diffusion_steps,
    Rng& rng);
absl::StatusOr<std::vector<BatchItem>> SampleBatch(
    const ClientDataset& dataset, int batch_size, int diffusion_steps,
    Rng& rng);

}  // namespace fedtalk

#endif  // FEDTALK_SYNTHDATA_H_
