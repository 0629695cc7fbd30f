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
#ifndef FEDTALK_OBJECTIVES_H_
#define FEDTALK_OBJECTIVES_H_

#include <cstdint>
#include <utility>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "fedtalk/tensor.h"

namespace fedtalk {

// Weights of the auxiliary terms; the diffusion term always has weight one.
struct LossWeights {
  double tdc = 0.1;
  double identity = 0.1;
  double perceptual = 0.05;
  double sync = 0.05;

  absl::Status Validate() const;
};

// Unweighted loss terms plus their weighted total.
struct LossBreakdown {
  double diffusion = 0.0;
  double tdc = 0.0;
  double identity = 0.0;
  double perceptual = 0.0;
  double sync = 0.0;
  double total = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& other);
  LossBreakdown& operator*=(double scale);
};

// Fixed random linear probes standing in for the frozen face-embedding and
// perceptual networks. Both act on single latent frames:
//   identity:   g(x) = G x / |G x|
//   perceptual: h(x) = H x
// Shared by every client and the server of a run; never trained.
class FrozenProbes {
 public:
  // G and H have i.i.d. N(0, 1 / latent_dim) entries drawn from `seed`.
  static FrozenProbes Create(int latent_dim, int identity_dim,
                             int perceptual_dim, uint64_t seed);
  static absl::StatusOr<FrozenProbes> FromMatrices(Matrix identity_map,
                                                   Matrix perceptual_map);

  int latent_dim() const { return static_cast<int>(identity_map_.cols()); }
  int identity_dim() const { return static_cast<int>(identity_map_.rows()); }
  int perceptual_dim() const {
    return static_cast<int>(perceptual_map_.rows());
  }
  const Matrix& identity_map() const { return identity_map_; }
  const Matrix& perceptual_map() const { return perceptual_map_; }

  // Unit-norm identity embedding of one frame; fails on a zero projection.
  absl::StatusOr<Vector> IdentityEmbedding(const Vector& frame) const;

 private:
  FrozenProbes(Matrix identity_map, Matrix perceptual_map)
      : identity_map_(std::move(identity_map)),
        perceptual_map_(std::move(perceptual_map)) {}

  Matrix identity_map_;
  Matrix perceptual_map_;
};

// A loss value with its gradient with respect to the differentiated argument
// (the predicted noise or the generated frames, see each function).
struct LossWithGrad {
  double value = 0.0;
  Matrix grad;
};

// Mean squared error over every frame and coordinate.
absl::StatusOr<double> DiffusionLoss(const Matrix& true_noise,
                                     const Matrix& predicted_noise);
absl::StatusOr<LossWithGrad> DiffusionLossWithGrad(
    const Matrix& true_noise, const Matrix& predicted_noise);

// Mean absolute mismatch between consecutive-frame differences of the true
// and predicted noise. Needs at least two frames.
absl::StatusOr<double> TdcLoss(const Matrix& true_noise,
                               const Matrix& predicted_noise);
absl::StatusOr<LossWithGrad> TdcLossWithGrad(const Matrix& true_noise,
                                             const Matrix& predicted_noise);

// 1 - cos(mean_f g(frame_f), ref_embedding), in [0, 2].
absl::StatusOr<double> IdentityLoss(const Matrix& generated_frames,
                                    const Vector& ref_embedding,
                                    const FrozenProbes& probes);
absl::StatusOr<LossWithGrad> IdentityLossWithGrad(
    const Matrix& generated_frames, const Vector& ref_embedding,
    const FrozenProbes& probes);

// Mean absolute difference of perceptual features h(.) over the clip.
absl::StatusOr<double> PerceptualLoss(const Matrix& generated_frames,
                                      const Matrix& target_frames,
                                      const FrozenProbes& probes);
absl::StatusOr<LossWithGrad> PerceptualLossWithGrad(
    const Matrix& generated_frames, const Matrix& target_frames,
    const FrozenProbes& probes);

// 1 - Pearson correlation between |c_f - c_{f-1}| and |x_f - x_{f-1}| over
// the clip, clamped to [0, 2]. Returns the neutral value 1 (zero gradient)
// when either sequence has no variance, which includes two-frame clips.
absl::StatusOr<double> SyncProxyLoss(const Matrix& generated_frames,
                                     const Matrix& cond);
absl::StatusOr<LossWithGrad> SyncProxyLossWithGrad(
    const Matrix& generated_frames, const Matrix& cond);

// Fills `total` from the unweighted terms of `parts`. Non-finite terms are an
// error rather than a NaN total.
absl::StatusOr<LossBreakdown> CombinedLoss(const LossBreakdown& parts,
                                           const LossWeights& weights);

}  // namespace fedtalk

#endif  // FEDTALK_OBJECTIVES_H_
