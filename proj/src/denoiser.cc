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
#include "fedtalk/denoiser.h"

#include <cmath>
#include <utility>

#include "absl/strings/str_cat.h"
#include "fedtalk/binary_io.h"

namespace fedtalk {
namespace {

constexpr std::string_view kAdapterMagic = "FTADAPT1";
constexpr int kLayers = BackboneParams::kNumLayers;

using LayerWeights = std::array<Matrix, kLayers>;

LayerWeights EffectiveWeights(const BackboneParams& backbone,
                              const AdapterSet* adapters) {
  LayerWeights w = backbone.weights;
  if (adapters != nullptr) {
    for (int l = 0; l < kLayers; ++l) w[l] += adapters->EffectiveDelta(l);
  }
  return w;
}

absl::Status CheckInputs(const DenoiserDims& dims, const Matrix& z_t, int t,
                         const Matrix& cond, const Vector& ident) {
  if (z_t.rows() < 1 || z_t.cols() != dims.latent_dim) {
    return absl::InvalidArgumentError(absl::StrCat(
        "latent must be F x ", dims.latent_dim, ", got ", z_t.rows(), "x",
        z_t.cols()));
  }
  if (cond.rows() != z_t.rows() || cond.cols() != dims.cond_dim) {
    return absl::InvalidArgumentError(absl::StrCat(
        "conditioning must be ", z_t.rows(), "x", dims.cond_dim, ", got ",
        cond.rows(), "x", cond.cols()));
  }
  if (ident.size() != dims.identity_dim) {
    return absl::InvalidArgumentError(absl::StrCat(
        "identity embedding must have ", dims.identity_dim, " entries"));
  }
  if (t < 0) {
    return absl::OutOfRangeError(absl::StrCat("negative diffusion step ", t));
  }
  return absl::OkStatus();
}

Matrix BuildInput(const DenoiserDims& dims, const Matrix& z_t, int t,
                  const Matrix& cond, const Vector& ident) {
  const Eigen::Index frames = z_t.rows();
  Matrix input(frames, dims.input_dim());
  const Vector time = TimestepEmbedding(t, dims.time_embed_dim);
  int col = 0;
  input.middleCols(col, dims.latent_dim) = z_t;
  col += dims.latent_dim;
  input.middleCols(col, dims.time_embed_dim) =
      time.transpose().replicate(frames, 1);
  col += dims.time_embed_dim;
  input.middleCols(col, dims.cond_dim) = cond;
  col += dims.cond_dim;
  input.middleCols(col, dims.identity_dim) =
      ident.transpose().replicate(frames, 1);
  return input;
}

struct ForwardPass {
  Matrix input;
  Matrix hidden;  // tanh activations, F x H
  Matrix output;  // F x D
};

ForwardPass RunForward(const BackboneParams& backbone, const LayerWeights& w,
                       Matrix input) {
  ForwardPass pass;
  pass.input = std::move(input);
  pass.hidden = pass.input * w[0].transpose();
  pass.hidden.rowwise() += backbone.biases[0].transpose();
  pass.hidden = pass.hidden.array().tanh();
  pass.output = pass.hidden * w[1].transpose();
  pass.output.rowwise() += backbone.biases[1].transpose();
  return pass;
}

struct ParamGrads {
  LayerWeights weights;
  std::array<Vector, kLayers> biases;
};

ParamGrads ZeroGrads(const BackboneParams& backbone) {
  ParamGrads g;
  for (int l = 0; l < kLayers; ++l) {
    g.weights[l] = Matrix::Zero(backbone.weights[l].rows(),
                                backbone.weights[l].cols());
    g.biases[l] = Vector::Zero(backbone.biases[l].size());
  }
  return g;
}

// Objective of one batch item. When `grads` is set, adds `scale` times the
// gradient with respect to the effective weights and the biases.
absl::StatusOr<LossBreakdown> ItemObjective(
    const BackboneParams& backbone, const LayerWeights& w,
    const BatchItem& item, const NoiseSchedule& schedule,
    const FrozenProbes& probes, const LossWeights& weights, double scale,
    ParamGrads* grads) {
  const LatentClip& clip = *item.clip;
  if (item.t < 0 || item.t >= schedule.steps()) {
    return absl::OutOfRangeError(absl::StrCat(
        "diffusion step ", item.t, " outside [0, ", schedule.steps(), ")"));
  }
  if (absl::Status s = CheckInputs(backbone.dims, clip.frames, item.t,
                                   clip.cond, clip.identity_embedding);
      !s.ok()) {
    return s;
  }
  if (item.noise.rows() != clip.frames.rows() ||
      item.noise.cols() != clip.frames.cols()) {
    return absl::InvalidArgumentError("noise shape does not match clip");
  }
  const double alpha_bar = schedule.alpha_bars()[item.t];
  const Matrix z_t = ForwardDiffuseWithAlphaBar(alpha_bar, clip.frames, item.noise);
  ForwardPass pass = RunForward(
      backbone, w,
      BuildInput(backbone.dims, z_t, item.t, clip.cond, clip.identity_embedding));
  const Matrix& predicted = pass.output;
  const Matrix clean = EstimateClean(alpha_bar, z_t, predicted);

  absl::StatusOr<Vector> ref = probes.IdentityEmbedding(clip.reference_frame);
  if (!ref.ok()) return ref.status();

  absl::StatusOr<LossWithGrad> diff = DiffusionLossWithGrad(item.noise, predicted);
  if (!diff.ok()) return diff.status();
  absl::StatusOr<LossWithGrad> tdc = TdcLossWithGrad(item.noise, predicted);
  if (!tdc.ok()) return tdc.status();
  absl::StatusOr<LossWithGrad> id = IdentityLossWithGrad(clean, *ref, probes);
  if (!id.ok()) return id.status();
  absl::StatusOr<LossWithGrad> perc =
      PerceptualLossWithGrad(clean, clip.frames, probes);
  if (!perc.ok()) return perc.status();
  absl::StatusOr<LossWithGrad> sync = SyncProxyLossWithGrad(clean, clip.cond);
  if (!sync.ok()) return sync.status();

  LossBreakdown parts;
  parts.diffusion = diff->value;
  parts.tdc = tdc->value;
  parts.identity = id->value;
  parts.perceptual = perc->value;
  parts.sync = sync->value;
  absl::StatusOr<LossBreakdown> combined = CombinedLoss(parts, weights);
  if (!combined.ok() || grads == nullptr) return combined;

  // d clean / d eps = -sqrt(1 - alpha_bar) / sqrt(alpha_bar).
  const double clean_slope = -std::sqrt(1.0 - alpha_bar) / std::sqrt(alpha_bar);
  Matrix grad_out = diff->grad + weights.tdc * tdc->grad +
                    clean_slope * (weights.identity * id->grad +
                                   weights.perceptual * perc->grad +
                                   weights.sync * sync->grad);
  grad_out *= scale;

  grads->weights[1].noalias() += grad_out.transpose() * pass.hidden;
  grads->biases[1] += grad_out.colwise().sum().transpose();
  Matrix grad_pre = grad_out * w[1];
  grad_pre.array() *= 1.0 - pass.hidden.array().square();
  grads->weights[0].noalias() += grad_pre.transpose() * pass.input;
  grads->biases[0] += grad_pre.colwise().sum().transpose();
  return combined;
}

absl::StatusOr<LossBreakdown> BatchObjective(
    const BackboneParams& backbone, const LayerWeights& w,
    std::span<const BatchItem> batch, const NoiseSchedule& schedule,
    const FrozenProbes& probes, const LossWeights& weights,
    ParamGrads* grads) {
  if (batch.empty()) return absl::InvalidArgumentError("empty batch");
  if (absl::Status s = weights.Validate(); !s.ok()) return s;
  const double scale = 1.0 / static_cast<double>(batch.size());
  LossBreakdown mean;
  for (const BatchItem& item : batch) {
    absl::StatusOr<LossBreakdown> loss = ItemObjective(
        backbone, w, item, schedule, probes, weights, scale, grads);
    if (!loss.ok()) return loss.status();
    mean += *loss;
  }
  mean *= scale;
  return mean;
}

}  // namespace

absl::Status DenoiserDims::Validate() const {
  if (latent_dim < 1 || time_embed_dim < 1 || cond_dim < 1 ||
      identity_dim < 1 || hidden_dim < 1) {
    return absl::InvalidArgumentError("denoiser dimensions must be positive");
  }
  return absl::OkStatus();
}

Vector TimestepEmbedding(int t, int dim) {
  Vector out(dim);
  const int pairs = dim / 2;
  for (int i = 0; i < pairs; ++i) {
    const double freq = std::pow(10000.0, -2.0 * i / dim);
    out[2 * i] = std::sin(t * freq);
    out[2 * i + 1] = std::cos(t * freq);
  }
  if (dim % 2 == 1) {
    out[dim - 1] = std::sin(t * std::pow(10000.0, -2.0 * pairs / dim));
  }
  return out;
}

absl::StatusOr<BackboneParams> BackboneParams::Create(const DenoiserDims& dims,
                                                      uint64_t seed) {
  if (absl::Status s = dims.Validate(); !s.ok()) return s;
  Rng rng(seed);
  BackboneParams params;
  params.dims = dims;
  params.weights[0] = GaussianMatrix(dims.hidden_dim, dims.input_dim(),
                                     1.0 / std::sqrt(dims.input_dim()), rng);
  params.biases[0] = GaussianVector(dims.hidden_dim, 0.01, rng);
  params.weights[1] = GaussianMatrix(dims.latent_dim, dims.hidden_dim,
                                     1.0 / std::sqrt(dims.hidden_dim), rng);
  params.biases[1] = GaussianVector(dims.latent_dim, 0.01, rng);
  return params;
}

absl::StatusOr<AdapterSet> AdapterSet::FromFactors(
    std::vector<LoraFactors> layers) {
  if (layers.empty()) {
    return absl::InvalidArgumentError("adapter set needs at least one layer");
  }
  const Eigen::Index rank = layers.front().a.rows();
  if (rank < 1) return absl::InvalidArgumentError("adapter rank must be >= 1");
  for (const LoraFactors& f : layers) {
    if (f.a.rows() != rank || f.b.cols() != rank || f.a.cols() < 1 ||
        f.b.rows() < 1) {
      return absl::InvalidArgumentError(
          "adapter factors must share one positive rank");
    }
  }
  AdapterSet set;
  set.rank_ = static_cast<int>(rank);
  set.layers_ = std::move(layers);
  return set;
}

absl::StatusOr<AdapterSet> AdapterSet::Initialize(const DenoiserDims& dims,
                                                  int rank, uint64_t seed) {
  if (rank < 1) return absl::InvalidArgumentError("adapter rank must be >= 1");
  if (absl::Status s = dims.Validate(); !s.ok()) return s;
  Rng rng(seed);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(rank));
  const std::array<std::pair<int, int>, kLayers> shapes = {
      std::pair{dims.hidden_dim, dims.input_dim()},
      std::pair{dims.latent_dim, dims.hidden_dim}};
  std::vector<LoraFactors> layers;
  for (const auto& [d_out, d_in] : shapes) {
    LoraFactors f;
    f.a = GaussianMatrix(rank, d_in, stddev, rng);
    f.b = Matrix::Zero(d_out, rank);
    layers.push_back(std::move(f));
  }
  return FromFactors(std::move(layers));
}

AdapterSet AdapterSet::ZerosLike(const AdapterSet& shape) {
  AdapterSet out = shape;
  for (LoraFactors& f : out.layers_) {
    f.a.setZero();
    f.b.setZero();
  }
  return out;
}

size_t AdapterSet::flat_size() const {
  size_t n = 0;
  for (const LoraFactors& f : layers_) n += f.a.size() + f.b.size();
  return n;
}

Matrix AdapterSet::EffectiveDelta(int layer) const {
  return layers_[layer].b * layers_[layer].a;
}

std::vector<double> FlattenAdapters(const AdapterSet& adapters) {
  std::vector<double> flat;
  flat.reserve(adapters.flat_size());
  for (int l = 0; l < adapters.num_layers(); ++l) {
    const LoraFactors& f = adapters.layer(l);
    flat.insert(flat.end(), f.b.data(), f.b.data() + f.b.size());
    flat.insert(flat.end(), f.a.data(), f.a.data() + f.a.size());
  }
  return flat;
}

absl::StatusOr<AdapterSet> UnflattenAdapters(std::span<const double> flat,
                                             const AdapterSet& shape) {
  if (flat.size() != shape.flat_size()) {
    return absl::InvalidArgumentError(
        absl::StrCat("flat adapter length ", flat.size(), " does not match ",
                     shape.flat_size()));
  }
  AdapterSet out = shape;
  size_t offset = 0;
  for (int l = 0; l < out.num_layers(); ++l) {
    LoraFactors& f = out.mutable_layer(l);
    std::copy_n(flat.begin() + offset, f.b.size(), f.b.data());
    offset += f.b.size();
    std::copy_n(flat.begin() + offset, f.a.size(), f.a.data());
    offset += f.a.size();
  }
  return out;
}

std::string EncodeAdapterCheckpoint(const AdapterSet& adapters) {
  BinaryWriter w;
  w.Magic(kAdapterMagic);
  w.U64(static_cast<uint64_t>(adapters.num_layers()));
  w.U64(static_cast<uint64_t>(adapters.rank()));
  for (int l = 0; l < adapters.num_layers(); ++l) {
    w.U64(static_cast<uint64_t>(adapters.layer(l).b.rows()));
    w.U64(static_cast<uint64_t>(adapters.layer(l).a.cols()));
  }
  const std::vector<double> flat = FlattenAdapters(adapters);
  w.U64(flat.size());
  w.F64s(flat);
  return w.data();
}

absl::StatusOr<AdapterSet> DecodeAdapterCheckpoint(std::string_view data) {
  BinaryReader r(data);
  if (absl::Status s = r.ExpectMagic(kAdapterMagic); !s.ok()) return s;
  absl::StatusOr<uint64_t> num_layers = r.U64();
  absl::StatusOr<uint64_t> rank = r.U64();
  if (!num_layers.ok()) return num_layers.status();
  if (!rank.ok()) return rank.status();
  if (*num_layers == 0 || *num_layers > 1024 || *rank == 0 || *rank > 1 << 20) {
    return absl::DataLossError("implausible adapter checkpoint header");
  }
  std::vector<LoraFactors> layers;
  for (uint64_t l = 0; l < *num_layers; ++l) {
    absl::StatusOr<uint64_t> d_out = r.U64();
    absl::StatusOr<uint64_t> d_in = r.U64();
    if (!d_out.ok()) return d_out.status();
    if (!d_in.ok()) return d_in.status();
    if (*d_out == 0 || *d_in == 0 || *d_out > 1 << 20 || *d_in > 1 << 20) {
      return absl::DataLossError("implausible adapter layer shape");
    }
    LoraFactors f;
    f.a = Matrix::Zero(static_cast<Eigen::Index>(*rank),
                       static_cast<Eigen::Index>(*d_in));
    f.b = Matrix::Zero(static_cast<Eigen::Index>(*d_out),
                       static_cast<Eigen::Index>(*rank));
    layers.push_back(std::move(f));
  }
  absl::StatusOr<AdapterSet> shape = AdapterSet::FromFactors(std::move(layers));
  if (!shape.ok()) return shape.status();
  absl::StatusOr<uint64_t> length = r.U64();
  if (!length.ok()) return length.status();
  if (*length != shape->flat_size()) {
    return absl::DataLossError("adapter checkpoint length does not match shape");
  }
  std::vector<double> flat(*length);
  if (absl::Status s = r.F64s(flat); !s.ok()) return s;
  if (!r.AtEnd()) return absl::DataLossError("trailing bytes in checkpoint");
  return UnflattenAdapters(flat, *shape);
}

absl::Status WriteAdapterCheckpoint(const AdapterSet& adapters,
                                    const std::string& path) {
  return WriteBinaryFile(path, EncodeAdapterCheckpoint(adapters));
}

absl::StatusOr<AdapterSet> ReadAdapterCheckpoint(const std::string& path) {
  absl::StatusOr<std::string> data = ReadBinaryFile(path);
  if (!data.ok()) return data.status();
  return DecodeAdapterCheckpoint(*data);
}

absl::Status CheckCompatible(const BackboneParams& backbone,
                             const AdapterSet& adapters) {
  if (adapters.num_layers() != kLayers) {
    return absl::InvalidArgumentError(absl::StrCat(
        "expected ", kLayers, " adapted layers, got ", adapters.num_layers()));
  }
  for (int l = 0; l < kLayers; ++l) {
    if (adapters.layer(l).b.rows() != backbone.weights[l].rows() ||
        adapters.layer(l).a.cols() != backbone.weights[l].cols()) {
      return absl::InvalidArgumentError(
          absl::StrCat("adapter layer ", l, " does not match backbone shape"));
    }
  }
  return absl::OkStatus();
}

absl::StatusOr<Matrix> PredictNoise(const BackboneParams& backbone,
                                    const AdapterSet& adapters,
                                    const Matrix& z_t, int t,
                                    const Matrix& cond, const Vector& ident) {
  if (absl::Status s = CheckCompatible(backbone, adapters); !s.ok()) return s;
  if (absl::Status s = CheckInputs(backbone.dims, z_t, t, cond, ident); !s.ok()) {
    return s;
  }
  return RunForward(backbone, EffectiveWeights(backbone, &adapters),
                    BuildInput(backbone.dims, z_t, t, cond, ident))
      .output;
}

absl::StatusOr<Matrix> PredictNoise(const BackboneParams& backbone,
                                    const Matrix& z_t, int t,
                                    const Matrix& cond, const Vector& ident) {
  if (absl::Status s = CheckInputs(backbone.dims, z_t, t, cond, ident); !s.ok()) {
    return s;
  }
  return RunForward(backbone, EffectiveWeights(backbone, nullptr),
                    BuildInput(backbone.dims, z_t, t, cond, ident))
      .output;
}

Matrix EstimateClean(double alpha_bar, const Matrix& z_t, const Matrix& eps) {
  return (z_t - std::sqrt(1.0 - alpha_bar) * eps) / std::sqrt(alpha_bar);
}

absl::StatusOr<LossBreakdown> EvaluateObjective(
    const BackboneParams& backbone, const AdapterSet& adapters,
    std::span<const BatchItem> batch, const NoiseSchedule& schedule,
    const FrozenProbes& probes, const LossWeights& weights) {
  if (absl::Status s = CheckCompatible(backbone, adapters); !s.ok()) return s;
  return BatchObjective(backbone, EffectiveWeights(backbone, &adapters), batch,
                        schedule, probes, weights, nullptr);
}

absl::StatusOr<AdapterGradient> AdapterGradients(
    const BackboneParams& backbone, const AdapterSet& adapters,
    std::span<const BatchItem> batch, const NoiseSchedule& schedule,
    const FrozenProbes& probes, const LossWeights& weights) {
  if (absl::Status s = CheckCompatible(backbone, adapters); !s.ok()) return s;
  ParamGrads grads = ZeroGrads(backbone);
  absl::StatusOr<LossBreakdown> loss =
      BatchObjective(backbone, EffectiveWeights(backbone, &adapters), batch,
                     schedule, probes, weights, &grads);
  if (!loss.ok()) return loss.status();
  AdapterGradient out{AdapterSet::ZerosLike(adapters), *loss};
  // With W' = W + B A: dL/dB = G A^T and dL/dA = B^T G.
  for (int l = 0; l < kLayers; ++l) {
    const LoraFactors& f = adapters.layer(l);
    LoraFactors& g = out.grad.mutable_layer(l);
    g.b.noalias() = grads.weights[l] * f.a.transpose();
    g.a.noalias() = f.b.transpose() * grads.weights[l];
  }
  return out;
}

absl::StatusOr<BackboneGradient> BackboneGradients(
    const BackboneParams& backbone, std::span<const BatchItem> batch,
    const NoiseSchedule& schedule, const FrozenProbes& probes,
    const LossWeights& weights) {
  ParamGrads grads = ZeroGrads(backbone);
  absl::StatusOr<LossBreakdown> loss =
      BatchObjective(backbone, backbone.weights, batch, schedule, probes,
                     weights, &grads);
  if (!loss.ok()) return loss.status();
  return BackboneGradient{std::move(grads.weights), std::move(grads.biases),
                          *loss};
}

absl::Status PretrainBackbone(BackboneParams& backbone,
                              std::span<const LatentClip> clips,
                              const NoiseSchedule& schedule,
                              const FrozenProbes& probes,
                              const LossWeights& weights,
                              const PretrainConfig& config, uint64_t seed) {
  if (config.steps == 0) return absl::OkStatus();
  if (config.steps < 0 || config.batch_size < 1 ||
      !(config.learning_rate > 0.0)) {
    return absl::InvalidArgumentError("invalid pretraining configuration");
  }
  Rng rng(seed);
  for (int step = 0; step < config.steps; ++step) {
    absl::StatusOr<std::vector<BatchItem>> batch =
        SampleBatch(clips, config.batch_size, schedule.steps(), rng);
    if (!batch.ok()) return batch.status();
    absl::StatusOr<BackboneGradient> grad =
        BackboneGradients(backbone, *batch, schedule, probes, weights);
    if (!grad.ok()) return grad.status();
    if (!std::isfinite(grad->loss.total)) {
      return absl::AbortedError("backbone pretraining diverged");
    }
    for (int l = 0; l < kLayers; ++l) {
      backbone.weights[l] -= config.learning_rate * grad->weights[l];
      backbone.biases[l] -= config.learning_rate * grad->biases[l];
    }
  }
  return absl::OkStatus();
}

}  // namespace fedtalk
