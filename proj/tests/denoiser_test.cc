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
#include <filesystem>
#include <vector>

#include "fedtalk/experiment.h"
#include "gtest/gtest.h"
#include "test_support.h"

namespace fedtalk {
namespace {

using ::fedtalk::testing::RandomAdapters;
using ::fedtalk::testing::TinyConfig;

class DenoiserTest : public ::testing::Test {
 protected:
  void SetUp() override {
    absl::StatusOr<Environment> env = BuildEnvironment(TinyConfig());
    ASSERT_TRUE(env.ok()) << env.status();
    env_ = std::make_unique<Environment>(*std::move(env));
  }

  std::vector<BatchItem> Batch(int size, uint64_t seed) const {
    Rng rng(seed);
    return *SampleBatch(env_->world.clients[0], size, env_->schedule.steps(),
                        rng);
  }

  std::unique_ptr<Environment> env_;
};

TEST(TimestepEmbeddingTest, ZeroStepAndOddDimension) {
  const Vector e = TimestepEmbedding(0, 5);
  const double expected[] = {0, 1, 0, 1, 0};
  for (int i = 0; i < 5; ++i) EXPECT_EQ(e[i], expected[i]);
  const Vector f = TimestepEmbedding(3, 4);
  EXPECT_DOUBLE_EQ(f[0], std::sin(3.0));
  EXPECT_DOUBLE_EQ(f[1], std::cos(3.0));
  EXPECT_DOUBLE_EQ(f[2], std::sin(3.0 / 100.0));
}

TEST(AdapterSetTest, RankOneEffectiveDelta) {
  Matrix a(1, 2), b(2, 1);
  a << 1, 2;
  b << 3, 4;
  absl::StatusOr<AdapterSet> set = AdapterSet::FromFactors({{a, b}});
  ASSERT_TRUE(set.ok());
  Matrix expected(2, 2);
  expected << 3, 6, 4, 8;
  EXPECT_EQ(set->EffectiveDelta(0), expected);
  EXPECT_EQ(set->flat_size(), 4u);
  // B then A.
  EXPECT_EQ(FlattenAdapters(*set), (std::vector<double>{3, 4, 1, 2}));
}

TEST(AdapterSetTest, RejectsZeroRank) {
  EXPECT_FALSE(AdapterSet::FromFactors({{Matrix(0, 2), Matrix(2, 0)}}).ok());
  DenoiserDims dims;
  EXPECT_FALSE(AdapterSet::Initialize(dims, 0, 1).ok());
}

TEST(AdapterSetTest, FlatRoundTripAndZeros) {
  absl::StatusOr<AdapterSet> init = AdapterSet::Initialize(DenoiserDims{}, 3, 5);
  ASSERT_TRUE(init.ok());
  const AdapterSet random = RandomAdapters(*init, 1.0, 2);
  const std::vector<double> flat = FlattenAdapters(random);
  absl::StatusOr<AdapterSet> back = UnflattenAdapters(flat, *init);
  ASSERT_TRUE(back.ok());
  EXPECT_EQ(FlattenAdapters(*back), flat);
  for (double v : FlattenAdapters(AdapterSet::ZerosLike(*init))) EXPECT_EQ(v, 0.0);
  EXPECT_FALSE(
      UnflattenAdapters(std::span<const double>(flat).first(flat.size() - 1),
                        *init)
          .ok());
}

TEST(AdapterSetTest, LinearInB) {
  Rng rng(1);
  const Matrix a = GaussianMatrix(2, 5, 1.0, rng);
  const Matrix b1 = GaussianMatrix(3, 2, 1.0, rng);
  const Matrix b2 = GaussianMatrix(3, 2, 1.0, rng);
  const AdapterSet s1 = *AdapterSet::FromFactors({{a, b1}});
  const AdapterSet s2 = *AdapterSet::FromFactors({{a, b2}});
  const AdapterSet sum = *AdapterSet::FromFactors({{a, b1 + b2}});
  EXPECT_LT((sum.EffectiveDelta(0) - s1.EffectiveDelta(0) - s2.EffectiveDelta(0))
                .cwiseAbs()
                .maxCoeff(),
            1e-12);
}

TEST(AdapterSetTest, InitializationLeavesWeightsUnchanged) {
  const DenoiserDims dims;
  absl::StatusOr<AdapterSet> set = AdapterSet::Initialize(dims, 4, 3);
  ASSERT_TRUE(set.ok());
  ASSERT_EQ(set->num_layers(), 2);
  EXPECT_EQ(set->layer(0).a.rows(), 4);
  EXPECT_EQ(set->layer(0).a.cols(), dims.input_dim());
  EXPECT_EQ(set->layer(1).b.rows(), dims.latent_dim);
  for (int l = 0; l < 2; ++l) {
    EXPECT_TRUE(set->layer(l).b.isZero(0.0));
    EXPECT_TRUE(set->EffectiveDelta(l).isZero(0.0));
  }
}

TEST(CheckpointTest, EncodeDecodeAndFileRoundTrip) {
  const AdapterSet set =
      RandomAdapters(*AdapterSet::Initialize(DenoiserDims{}, 2, 1), 0.5, 8);
  const std::string bytes = EncodeAdapterCheckpoint(set);
  EXPECT_EQ(bytes.substr(0, 8), "FTADAPT1");
  absl::StatusOr<AdapterSet> decoded = DecodeAdapterCheckpoint(bytes);
  ASSERT_TRUE(decoded.ok()) << decoded.status();
  EXPECT_EQ(FlattenAdapters(*decoded), FlattenAdapters(set));
  EXPECT_FALSE(DecodeAdapterCheckpoint(bytes.substr(0, bytes.size() - 3)).ok());
  EXPECT_FALSE(DecodeAdapterCheckpoint("FTADAPT0").ok());

  const std::string path =
      (std::filesystem::path(::testing::TempDir()) / "ckpt.adapters").string();
  ASSERT_TRUE(WriteAdapterCheckpoint(set, path).ok());
  absl::StatusOr<AdapterSet> read = ReadAdapterCheckpoint(path);
  ASSERT_TRUE(read.ok());
  EXPECT_EQ(FlattenAdapters(*read), FlattenAdapters(set));
  EXPECT_FALSE(ReadAdapterCheckpoint(path + ".missing").ok());
}

TEST_F(DenoiserTest, ZeroBMatchesBackboneBitForBit) {
  const LatentClip& clip = env_->world.clients[1].clips[0];
  Rng rng(4);
  const Matrix z = GaussianMatrix(clip.frames.rows(), clip.frames.cols(), 1.0, rng);
  absl::StatusOr<Matrix> with = PredictNoise(env_->backbone, env_->initial_adapters,
                                             z, 3, clip.cond, clip.identity_embedding);
  absl::StatusOr<Matrix> without =
      PredictNoise(env_->backbone, z, 3, clip.cond, clip.identity_embedding);
  ASSERT_TRUE(with.ok() && without.ok());
  EXPECT_EQ(*with, *without);
}

TEST_F(DenoiserTest, PredictionIsDeterministicAndShaped) {
  const AdapterSet adapters = RandomAdapters(env_->initial_adapters, 0.3, 1);
  const LatentClip& clip = env_->world.clients[0].clips[0];
  absl::StatusOr<Matrix> a = PredictNoise(env_->backbone, adapters, clip.frames,
                                          2, clip.cond, clip.identity_embedding);
  absl::StatusOr<Matrix> b = PredictNoise(env_->backbone, adapters, clip.frames,
                                          2, clip.cond, clip.identity_embedding);
  ASSERT_TRUE(a.ok());
  EXPECT_EQ(*a, *b);
  EXPECT_EQ(a->rows(), clip.frames.rows());
  EXPECT_EQ(a->cols(), clip.frames.cols());
  EXPECT_FALSE(PredictNoise(env_->backbone, adapters, clip.frames, 2,
                            clip.cond.leftCols(1), clip.identity_embedding)
                   .ok());
}

TEST_F(DenoiserTest, PerfectPredictionHasZeroLossAndGradient) {
  // Zero output layer: the network predicts its output bias for every frame.
  BackboneParams backbone = env_->backbone;
  backbone.weights[1].setZero();
  const LatentClip& clip = env_->world.clients[0].clips[0];
  BatchItem item;
  item.clip = &clip;
  item.t = 4;
  item.noise = backbone.biases[1].transpose().replicate(clip.frames.rows(), 1);
  const LossWeights diffusion_only{0, 0, 0, 0};
  absl::StatusOr<AdapterGradient> grad =
      AdapterGradients(backbone, env_->initial_adapters, {&item, 1},
                       env_->schedule, env_->probes, diffusion_only);
  ASSERT_TRUE(grad.ok()) << grad.status();
  EXPECT_EQ(grad->loss.total, 0.0);
  for (double g : FlattenAdapters(grad->grad)) EXPECT_EQ(g, 0.0);
}

TEST_F(DenoiserTest, GradientLossMatchesObjective) {
  const AdapterSet adapters = RandomAdapters(env_->initial_adapters, 0.3, 3);
  const std::vector<BatchItem> batch = Batch(3, 5);
  absl::StatusOr<LossBreakdown> loss = EvaluateObjective(
      env_->backbone, adapters, batch, env_->schedule, env_->probes, LossWeights{});
  absl::StatusOr<AdapterGradient> grad = AdapterGradients(
      env_->backbone, adapters, batch, env_->schedule, env_->probes, LossWeights{});
  ASSERT_TRUE(loss.ok() && grad.ok());
  EXPECT_NEAR(grad->loss.total, loss->total, 1e-12 * std::abs(loss->total));
}

// Central differences of the full five-term objective over every adapter
// coordinate.
TEST_F(DenoiserTest, AdapterGradientMatchesFiniteDifferences) {
  const LossWeights weights{0.5, 0.5, 0.5, 0.5};
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    const AdapterSet adapters = RandomAdapters(env_->initial_adapters, 0.3, seed);
    const std::vector<BatchItem> batch = Batch(3, 100 + seed);
    absl::StatusOr<AdapterGradient> grad = AdapterGradients(
        env_->backbone, adapters, batch, env_->schedule, env_->probes, weights);
    ASSERT_TRUE(grad.ok()) << grad.status();
    const std::vector<double> flat = FlattenAdapters(adapters);
    const std::vector<double> analytic = FlattenAdapters(grad->grad);
    auto loss_at = [&](const std::vector<double>& v) {
      return EvaluateObjective(env_->backbone, *UnflattenAdapters(v, adapters),
                               batch, env_->schedule, env_->probes, weights)
          ->total;
    };
    constexpr double kStep = 1e-5;
    for (size_t i = 0; i < flat.size(); ++i) {
      std::vector<double> plus = flat, minus = flat;
      plus[i] += kStep;
      minus[i] -= kStep;
      const double fd = (loss_at(plus) - loss_at(minus)) / (2 * kStep);
      const double scale = std::max({std::abs(analytic[i]), std::abs(fd), 1e-6});
      EXPECT_LE(std::abs(analytic[i] - fd) / scale, 1e-4)
          << "seed " << seed << " coordinate " << i;
    }
  }
}

TEST_F(DenoiserTest, DirectionalDerivative) {
  const AdapterSet adapters = RandomAdapters(env_->initial_adapters, 0.3, 9);
  const std::vector<BatchItem> batch = Batch(2, 17);
  absl::StatusOr<AdapterGradient> grad = AdapterGradients(
      env_->backbone, adapters, batch, env_->schedule, env_->probes, LossWeights{});
  ASSERT_TRUE(grad.ok());
  const std::vector<double> flat = FlattenAdapters(adapters);
  const std::vector<double> analytic = FlattenAdapters(grad->grad);
  constexpr double kDelta = 1e-6;
  for (size_t i : {size_t{0}, flat.size() / 2, flat.size() - 1}) {
    std::vector<double> plus = flat, minus = flat;
    plus[i] += kDelta;
    minus[i] -= kDelta;
    const double diff =
        EvaluateObjective(env_->backbone, *UnflattenAdapters(plus, adapters),
                          batch, env_->schedule, env_->probes, LossWeights{})
            ->total -
        EvaluateObjective(env_->backbone, *UnflattenAdapters(minus, adapters),
                          batch, env_->schedule, env_->probes, LossWeights{})
            ->total;
    EXPECT_NEAR(diff, 2 * kDelta * analytic[i], 1e-6);
  }
}

TEST_F(DenoiserTest, BackboneGradientMatchesFiniteDifferences) {
  const std::vector<BatchItem> batch = Batch(2, 3);
  const LossWeights weights{0.5, 0.5, 0.5, 0.5};
  absl::StatusOr<BackboneGradient> grad = BackboneGradients(
      env_->backbone, batch, env_->schedule, env_->probes, weights);
  ASSERT_TRUE(grad.ok());
  const AdapterSet none = AdapterSet::ZerosLike(env_->initial_adapters);
  auto loss_of = [&](const BackboneParams& b) {
    return EvaluateObjective(b, none, batch, env_->schedule, env_->probes, weights)
        ->total;
  };
  constexpr double kStep = 1e-5;
  for (int l = 0; l < BackboneParams::kNumLayers; ++l) {
    for (Eigen::Index i = 0; i < env_->backbone.weights[l].size(); i += 7) {
      BackboneParams plus = env_->backbone, minus = env_->backbone;
      plus.weights[l].data()[i] += kStep;
      minus.weights[l].data()[i] -= kStep;
      const double fd = (loss_of(plus) - loss_of(minus)) / (2 * kStep);
      const double g = grad->weights[l].data()[i];
      EXPECT_LE(std::abs(g - fd), 1e-4 * std::max({std::abs(g), std::abs(fd), 1e-6}));
    }
    for (Eigen::Index i = 0; i < env_->backbone.biases[l].size(); ++i) {
      BackboneParams plus = env_->backbone, minus = env_->backbone;
      plus.biases[l][i] += kStep;
      minus.biases[l][i] -= kStep;
      const double fd = (loss_of(plus) - loss_of(minus)) / (2 * kStep);
      const double g = grad->biases[l][i];
      EXPECT_LE(std::abs(g - fd), 1e-4 * std::max({std::abs(g), std::abs(fd), 1e-6}));
    }
  }
}

TEST_F(DenoiserTest, PretrainingLowersPublicLoss) {
  BackboneParams backbone =
      *BackboneParams::Create(TinyConfig().dims(), DeriveSeed(1, {kTagBackbone}));
  Rng rng(77);
  const std::vector<BatchItem> batch =
      *SampleBatch(env_->world.public_clips, 32, env_->schedule.steps(), rng);
  const AdapterSet none = AdapterSet::ZerosLike(env_->initial_adapters);
  const LossWeights diffusion_only{0, 0, 0, 0};
  const double before = EvaluateObjective(backbone, none, batch, env_->schedule,
                                          env_->probes, diffusion_only)
                            ->total;
  ASSERT_TRUE(PretrainBackbone(backbone, env_->world.public_clips, env_->schedule,
                               env_->probes, diffusion_only,
                               PretrainConfig{200, 8, 0.2}, 5)
                  .ok());
  const double after = EvaluateObjective(backbone, none, batch, env_->schedule,
                                         env_->probes, diffusion_only)
                           ->total;
  EXPECT_LT(after, before);
}

}  // namespace
}  // namespace fedtalk
