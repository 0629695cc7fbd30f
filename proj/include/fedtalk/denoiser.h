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
#ifndef FEDTALK_DENOISER_H_
#define FEDTALK_DENOISER_H_

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "fedtalk/objectives.h"
#include "fedtalk/schedule.h"
#include "fedtalk/synthdata.h"
#include "fedtalk/tensor.h"

namespace fedtalk {

struct DenoiserDims {
  int latent_dim = 16;
  int time_embed_dim = 8;
  int cond_dim = 4;
  int identity_dim = 8;
  int hidden_dim = 64;

  // Per-frame input: [z_t | time embedding | c(a) | e(r)].
  int input_dim() const {
    return latent_dim + time_embed_dim + cond_dim + identity_dim;
  }
  absl::Status Validate() const;
};

// Sinusoidal embedding of diffusion step t: pairs (sin(t w_i), cos(t w_i))
// with w_i = 10000^(-2i/dim). An odd trailing slot holds sin(t w_last).
Vector TimestepEmbedding(int t, int dim);

// Frozen two-layer perceptron applied per frame:
//   eps = W2 tanh(W1 x + b1) + b2.
// Layer 0 is hidden x input, layer 1 is latent x hidden.
struct BackboneParams {
  static constexpr int kNumLayers = 2;

  DenoiserDims dims;
  std::array<Matrix, kNumLayers> weights;
  std::array<Vector, kNumLayers> biases;

  // Weights ~ N(0, 1/fan_in), biases ~ N(0, 0.01^2).
  static absl::StatusOr<BackboneParams> Create(const DenoiserDims& dims,
                                               uint64_t seed);
};

// Low-rank factors of one adapted weight matrix W (d_out x d_in):
// W' = W + b * a with a: rank x d_in and b: d_out x rank.
struct LoraFactors {
  Matrix a;
  Matrix b;
};

// The communicated adapter state. Flat layout, used for deltas, clipping,
// masking and checkpoints: for each layer in order, B then A, row-major.
class AdapterSet {
 public:
  static absl::StatusOr<AdapterSet> FromFactors(std::vector<LoraFactors> layers);
  // A ~ N(0, 1/rank), B = 0 for every backbone layer, so W' = W initially.
  static absl::StatusOr<AdapterSet> Initialize(const DenoiserDims& dims,
                                               int rank, uint64_t seed);
  // All-zero factors shaped like `shape`.
  static AdapterSet ZerosLike(const AdapterSet& shape);

  int rank() const { return rank_; }
  int num_layers() const { return static_cast<int>(layers_.size()); }
  const LoraFactors& layer(int i) const { return layers_[i]; }
  LoraFactors& mutable_layer(int i) { return layers_[i]; }
  size_t flat_size() const;

  // Delta W = B A for layer i.
  Matrix EffectiveDelta(int layer) const;

 private:
  AdapterSet() = default;

  int rank_ = 0;
  std::vector<LoraFactors> layers_;
};

std::vector<double> FlattenAdapters(const AdapterSet& adapters);
absl::StatusOr<AdapterSet> UnflattenAdapters(std::span<const double> flat,
                                             const AdapterSet& shape);

// Checkpoint encoding: magic "FTADAPT1", then little-endian uint64 layer
// count, rank, (d_out, d_in) per layer, flat length, and the flat vector as
// little-endian float64.
std::string EncodeAdapterCheckpoint(const AdapterSet& adapters);
absl::StatusOr<AdapterSet> DecodeAdapterCheckpoint(std::string_view data);
absl::Status WriteAdapterCheckpoint(const AdapterSet& adapters,
                                    const std::string& path);
absl::StatusOr<AdapterSet> ReadAdapterCheckpoint(const std::string& path);

// Checks that the adapters adapt exactly the backbone's two layers.
absl::Status CheckCompatible(const BackboneParams& backbone,
                             const AdapterSet& adapters);

// eps_theta(z_t, t, c(a), e(r)) for every frame of z_t (F x D); cond is
// F x E_c and ident has E_id entries.
absl::StatusOr<Matrix> PredictNoise(const BackboneParams& backbone,
                                    const AdapterSet& adapters,
                                    const Matrix& z_t, int t,
                                    const Matrix& cond, const Vector& ident);
// The frozen backbone alone (no adapters).
absl::StatusOr<Matrix> PredictNoise(const BackboneParams& backbone,
                                    const Matrix& z_t, int t,
                                    const Matrix& cond, const Vector& ident);

// One-step estimate of the clean latent from a noise prediction:
//   (z_t - sqrt(1 - alpha_bar) eps) / sqrt(alpha_bar).
Matrix EstimateClean(double alpha_bar, const Matrix& z_t, const Matrix& eps);

// Batch-mean client objective. The auxiliary terms act on the one-step clean
// estimate of each item.
absl::StatusOr<LossBreakdown> EvaluateObjective(
    const BackboneParams& backbone, const AdapterSet& adapters,
    std::span<const BatchItem> batch, const NoiseSchedule& schedule,
    const FrozenProbes& probes, const LossWeights& weights);

struct AdapterGradient {
  AdapterSet grad;
  LossBreakdown loss;
};

// Exact gradient of EvaluateObjective's total with respect to the adapter
// factors only.
absl::StatusOr<AdapterGradient> AdapterGradients(
    const BackboneParams& backbone, const AdapterSet& adapters,
    std::span<const BatchItem> batch, const NoiseSchedule& schedule,
    const FrozenProbes& probes, const LossWeights& weights);

struct BackboneGradient {
  std::array<Matrix, BackboneParams::kNumLayers> weights;
  std::array<Vector, BackboneParams::kNumLayers> biases;
  LossBreakdown loss;
};

// Gradient of the objective of the bare backbone with respect to its
// weights and biases. Only used for central pretraining.
absl::StatusOr<BackboneGradient> BackboneGradients(
    const BackboneParams& backbone, std::span<const BatchItem> batch,
    const NoiseSchedule& schedule, const FrozenProbes& probes,
    const LossWeights& weights);

struct PretrainConfig {
  int steps = 2000;
  int batch_size = 8;
  double learning_rate = 0.2;
};

// Plain gradient descent on the backbone over public clips.
absl::Status PretrainBackbone(BackboneParams& backbone,
                              std::span<const LatentClip> clips,
                              const NoiseSchedule& schedule,
                              const FrozenProbes& probes,
                              const LossWeights& weights,
                              const PretrainConfig& config, uint64_t seed);

}  // namespace fedtalk

#endif  // FEDTALK_DENOISER_H_
