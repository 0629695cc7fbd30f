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
#include "fedtalk/objectives.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "absl/strings/str_cat.h"

namespace fedtalk {
namespace {

// Variance below this fraction of the raw second moment counts as zero.
constexpr double kZeroVarianceRatio = 1e-20;

absl::Status CheckSameShape(const Matrix& a, const Matrix& b,
                            const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    return absl::InvalidArgumentError(
        absl::StrCat(what, ": shape mismatch ", a.rows(), "x", a.cols(),
                     " vs ", b.rows(), "x", b.cols()));
  }
  if (a.size() == 0) {
    return absl::InvalidArgumentError(absl::StrCat(what, ": empty input"));
  }
  return absl::OkStatus();
}

double Sign(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace

absl::Status LossWeights::Validate() const {
  for (double w : {tdc, identity, perceptual, sync}) {
    if (!std::isfinite(w) || w < 0.0) {
      return absl::InvalidArgumentError(
          absl::StrCat("loss weights must be finite and >= 0, got ", w));
    }
  }
  return absl::OkStatus();
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& other) {
  diffusion += other.diffusion;
  tdc += other.tdc;
  identity += other.identity;
  perceptual += other.perceptual;
  sync += other.sync;
  total += other.total;
  return *this;
}

LossBreakdown& LossBreakdown::operator*=(double scale) {
  diffusion *= scale;
  tdc *= scale;
  identity *= scale;
  perceptual *= scale;
  sync *= scale;
  total *= scale;
  return *this;
}

FrozenProbes FrozenProbes::Create(int latent_dim, int identity_dim,
                                  int perceptual_dim, uint64_t seed) {
  Rng rng(seed);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(latent_dim));
  Matrix identity_map = GaussianMatrix(identity_dim, latent_dim, stddev, rng);
  Matrix perceptual_map =
      GaussianMatrix(perceptual_dim, latent_dim, stddev, rng);
  return FrozenProbes(std::move(identity_map), std::move(perceptual_map));
}

absl::StatusOr<FrozenProbes> FrozenProbes::FromMatrices(
    Matrix identity_map, Matrix perceptual_map) {
  if (identity_map.size() == 0 || perceptual_map.size() == 0 ||
      identity_map.cols() != perceptual_map.cols()) {
    return absl::InvalidArgumentError(
        "probe maps must be nonempty and act on the same latent dimension");
  }
  return FrozenProbes(std::move(identity_map), std::move(perceptual_map));
}

absl::StatusOr<Vector> FrozenProbes::IdentityEmbedding(
    const Vector& frame) const {
  if (frame.size() != latent_dim()) {
    return absl::InvalidArgumentError("frame size does not match probe");
  }
  Vector projected = identity_map_ * frame;
  const double norm = projected.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    return absl::FailedPreconditionError(
        "degenerate identity probe output (zero or non-finite norm)");
  }
  return projected / norm;
}

absl::StatusOr<LossWithGrad> DiffusionLossWithGrad(
    const Matrix& true_noise, const Matrix& predicted_noise) {
  if (absl::Status s = CheckSameShape(true_noise, predicted_noise,
                                      "diffusion loss");
      !s.ok()) {
    return s;
  }
  const Matrix error = predicted_noise - true_noise;
  const double count = static_cast<double>(error.size());
  return LossWithGrad{error.squaredNorm() / count, (2.0 / count) * error};
}

absl::StatusOr<double> DiffusionLoss(const Matrix& true_noise,
                                     const Matrix& predicted_noise) {
  absl::StatusOr<LossWithGrad> r =
      DiffusionLossWithGrad(true_noise, predicted_noise);
  if (!r.ok()) return r.status();
  return r->value;
}

absl::StatusOr<LossWithGrad> TdcLossWithGrad(const Matrix& true_noise,
                                             const Matrix& predicted_noise) {
  if (absl::Status s = CheckSameShape(true_noise, predicted_noise, "tdc loss");
      !s.ok()) {
    return s;
  }
  const Eigen::Index frames = true_noise.rows();
  if (frames < 2) {
    return absl::InvalidArgumentError(
        "tdc loss needs at least two frames per clip");
  }
  const Eigen::Index dim = true_noise.cols();
  const double count = static_cast<double>((frames - 1) * dim);
  LossWithGrad out;
  out.grad = Matrix::Zero(frames, dim);
  double sum = 0.0;
  for (Eigen::Index f = 1; f < frames; ++f) {
    for (Eigen::Index d = 0; d < dim; ++d) {
      const double mismatch = (true_noise(f, d) - true_noise(f - 1, d)) -
                              (predicted_noise(f, d) - predicted_noise(f - 1, d));
      sum += std::abs(mismatch);
      // d|m|/d(pred_f) = -sign(m), d|m|/d(pred_{f-1}) = +sign(m).
      const double g = Sign(mismatch) / count;
      out.grad(f, d) -= g;
      out.grad(f - 1, d) += g;
    }
  }
  out.value = sum / count;
  return out;
}

absl::StatusOr<double> TdcLoss(const Matrix& true_noise,
                               const Matrix& predicted_noise) {
  absl::StatusOr<LossWithGrad> r = TdcLossWithGrad(true_noise, predicted_noise);
  if (!r.ok()) return r.status();
  return r->value;
}

absl::StatusOr<LossWithGrad> IdentityLossWithGrad(
    const Matrix& generated_frames, const Vector& ref_embedding,
    const FrozenProbes& probes) {
  const Eigen::Index frames = generated_frames.rows();
  if (frames == 0) {
    return absl::InvalidArgumentError("identity loss needs at least one frame");
  }
  if (generated_frames.cols() != probes.latent_dim() ||
      ref_embedding.size() != probes.identity_dim()) {
    return absl::InvalidArgumentError("identity loss: dimension mismatch");
  }
  const double ref_norm = ref_embedding.norm();
  if (!(ref_norm > 0.0)) {
    return absl::FailedPreconditionError("zero-norm reference embedding");
  }
  const Vector ref_unit = ref_embedding / ref_norm;

  // y_f = G x_f, n_f = y_f / |y_f|, m = mean_f n_f.
  const Matrix projected =
      generated_frames * probes.identity_map().transpose();  // F x E
  std::vector<double> norms(frames);
  Vector mean = Vector::Zero(probes.identity_dim());
  for (Eigen::Index f = 0; f < frames; ++f) {
    norms[f] = projected.row(f).norm();
    if (!(norms[f] > 0.0) || !std::isfinite(norms[f])) {
      return absl::FailedPreconditionError(
          "degenerate identity probe output (zero or non-finite norm)");
    }
    mean += projected.row(f).transpose() / norms[f];
  }
  mean /= static_cast<double>(frames);
  const double mean_norm = mean.norm();
  if (!(mean_norm > 0.0)) {
    return absl::FailedPreconditionError(
        "mean identity embedding has zero norm");
  }
  const double cosine = mean.dot(ref_unit) / mean_norm;

  // dL/dm = -(ref_unit - cos * m / |m|) / |m|.
  const Vector grad_mean = -(ref_unit - cosine * mean / mean_norm) / mean_norm;
  LossWithGrad out;
  out.value = 1.0 - cosine;
  out.grad.resize(frames, generated_frames.cols());
  for (Eigen::Index f = 0; f < frames; ++f) {
    const Vector unit = projected.row(f).transpose() / norms[f];
    const Vector grad_unit = grad_mean / static_cast<double>(frames);
    // dn/dy = (I - n n^T) / |y|.
    const Vector grad_projected =
        (grad_unit - unit * unit.dot(grad_unit)) / norms[f];
    out.grad.row(f) =
        (probes.identity_map().transpose() * grad_projected).transpose();
  }
  return out;
}

absl::StatusOr<double> IdentityLoss(const Matrix& generated_frames,
                                    const Vector& ref_embedding,
                                    const FrozenProbes& probes) {
  absl::StatusOr<LossWithGrad> r =
      IdentityLossWithGrad(generated_frames, ref_embedding, probes);
  if (!r.ok()) return r.status();
  return r->value;
}

absl::StatusOr<LossWithGrad> PerceptualLossWithGrad(
    const Matrix& generated_frames, const Matrix& target_frames,
    const FrozenProbes& probes) {
  if (absl::Status s =
          CheckSameShape(generated_frames, target_frames, "perceptual loss");
      !s.ok()) {
    return s;
  }
  if (generated_frames.cols() != probes.latent_dim()) {
    return absl::InvalidArgumentError("perceptual loss: dimension mismatch");
  }
  const Matrix& h = probes.perceptual_map();
  const Matrix diff = (generated_frames - target_frames) * h.transpose();
  const double count = static_cast<double>(diff.size());
  const Matrix signs = diff.unaryExpr([](double x) { return Sign(x); });
  return LossWithGrad{diff.cwiseAbs().sum() / count, (signs * h) / count};
}

absl::StatusOr<double> PerceptualLoss(const Matrix& generated_frames,
                                      const Matrix& target_frames,
                                      const FrozenProbes& probes) {
  absl::StatusOr<LossWithGrad> r =
      PerceptualLossWithGrad(generated_frames, target_frames, probes);
  if (!r.ok()) return r.status();
  return r->value;
}

absl::StatusOr<LossWithGrad> SyncProxyLossWithGrad(
    const Matrix& generated_frames, const Matrix& cond) {
  const Eigen::Index frames = generated_frames.rows();
  if (frames < 2) {
    return absl::InvalidArgumentError("sync proxy needs at least two frames");
  }
  if (cond.rows() != frames) {
    return absl::InvalidArgumentError(
        absl::StrCat("sync proxy: conditioning length ", cond.rows(),
                     " does not match frame count ", frames));
  }
  const Eigen::Index steps = frames - 1;
  Vector cond_change(steps), frame_change(steps);
  Matrix frame_diff(steps, generated_frames.cols());
  for (Eigen::Index i = 0; i < steps; ++i) {
    cond_change[i] = (cond.row(i + 1) - cond.row(i)).norm();
    frame_diff.row(i) = generated_frames.row(i + 1) - generated_frames.row(i);
    frame_change[i] = frame_diff.row(i).norm();
  }
  const Vector a = cond_change.array() - cond_change.mean();
  const Vector b = frame_change.array() - frame_change.mean();
  const double saa = a.squaredNorm();
  const double sbb = b.squaredNorm();

  LossWithGrad out;
  out.grad = Matrix::Zero(frames, generated_frames.cols());
  if (saa <= kZeroVarianceRatio * cond_change.squaredNorm() ||
      sbb <= kZeroVarianceRatio * frame_change.squaredNorm()) {
    out.value = 1.0;
    return out;
  }
  const double denom = std::sqrt(saa * sbb);
  const double rho = a.dot(b) / denom;
  const double loss = 1.0 - rho;
  out.value = std::clamp(loss, 0.0, 2.0);
  if (loss != out.value) return out;  // clamped: flat

  // d rho / d v_i = a_i / sqrt(Saa Sbb) - rho b_i / Sbb (a, b centred).
  for (Eigen::Index i = 0; i < steps; ++i) {
    if (!(frame_change[i] > 0.0)) continue;
    const double grad_v = -(a[i] / denom - rho * b[i] / sbb);
    const auto dir = frame_diff.row(i) / frame_change[i];
    out.grad.row(i + 1) += grad_v * dir;
    out.grad.row(i) -= grad_v * dir;
  }
  return out;
}

absl::StatusOr<double> SyncProxyLoss(const Matrix& generated_frames,
                                     const Matrix& cond) {
  absl::StatusOr<LossWithGrad> r =
      SyncProxyLossWithGrad(generated_frames, cond);
  if (!r.ok()) return r.status();
  return r->value;
}

absl::StatusOr<LossBreakdown> CombinedLoss(const LossBreakdown& parts,
                                           const LossWeights& weights) {
  for (double term : {parts.diffusion, parts.tdc, parts.identity,
                      parts.perceptual, parts.sync}) {
    if (!std::isfinite(term)) {
      return absl::InvalidArgumentError(
          absl::StrCat("non-finite loss term: ", term));
    }
  }
  LossBreakdown out = parts;
  out.total = parts.diffusion + weights.tdc * parts.tdc +
              weights.identity * parts.identity +
              weights.perceptual * parts.perceptual + weights.sync * parts.sync;
  return out;
}

}  // namespace fedtalk
