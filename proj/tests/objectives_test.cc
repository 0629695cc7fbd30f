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

#include <cmath>

#include "fedtalk/random.h"
#include "fedtalk/tensor.h"
#include "gtest/gtest.h"

namespace fedtalk {
namespace {

Matrix Rows(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(rows.size(), rows.begin()->size());
  int r = 0;
  for (const auto& row : rows) {
    int c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

FrozenProbes IdentityProbes(int dim) {
  return *FrozenProbes::FromMatrices(Matrix::Identity(dim, dim),
                                     Matrix::Identity(dim, dim));
}

TEST(DiffusionLossTest, HandExamples) {
  EXPECT_EQ(*DiffusionLoss(Rows({{0.3, -1.2}}), Rows({{0.3, -1.2}})), 0.0);
  EXPECT_DOUBLE_EQ(*DiffusionLoss(Rows({{0, 0}}), Rows({{1, 1}})), 1.0);
  EXPECT_FALSE(DiffusionLoss(Rows({{0, 0}}), Rows({{1}})).ok());
}

TEST(TdcLossTest, HandExamples) {
  const Matrix a = Rows({{0.1, 2.0}, {-0.4, 1.0}, {0.7, 0.0}});
  EXPECT_EQ(*TdcLoss(a, a), 0.0);
  EXPECT_DOUBLE_EQ(*TdcLoss(Rows({{0}, {1}}), Rows({{5}, {5}})), 1.0);
  EXPECT_FALSE(TdcLoss(Rows({{0}}), Rows({{0}})).ok());
}

TEST(TdcLossTest, IgnoresConstantOffsets) {
  Rng rng(4);
  const Matrix truth = GaussianMatrix(6, 3, 1.0, rng);
  const Matrix pred = GaussianMatrix(6, 3, 1.0, rng);
  Matrix shifted = pred;
  shifted.rowwise() += Eigen::RowVector3d(1.5, -2.0, 0.25);
  EXPECT_NEAR(*TdcLoss(truth, pred), *TdcLoss(truth, shifted), 1e-12);
}

TEST(IdentityLossTest, CosineCases) {
  const FrozenProbes probes = IdentityProbes(2);
  const Matrix frames = Rows({{1, 0}, {2, 0}});
  EXPECT_NEAR(*IdentityLoss(frames, Vector::Unit(2, 0), probes), 0.0, 1e-15);
  EXPECT_NEAR(*IdentityLoss(frames, -Vector::Unit(2, 0), probes), 2.0, 1e-15);
  EXPECT_NEAR(*IdentityLoss(frames, Vector::Unit(2, 1), probes), 1.0, 1e-15);
}

TEST(IdentityLossTest, ZeroEmbeddingIsAnError) {
  const FrozenProbes probes = IdentityProbes(2);
  EXPECT_FALSE(IdentityLoss(Rows({{0, 0}}), Vector::Unit(2, 0), probes).ok());
  EXPECT_FALSE(IdentityLoss(Rows({{1, 0}}), Vector::Zero(2), probes).ok());
}

TEST(IdentityLossTest, InvariantToFrameScale) {
  const FrozenProbes probes = FrozenProbes::Create(5, 3, 4, 8);
  Rng rng(2);
  const Matrix frames = GaussianMatrix(4, 5, 1.0, rng);
  const Vector ref = GaussianVector(3, 1.0, rng).normalized();
  const double loss = *IdentityLoss(frames, ref, probes);
  EXPECT_GE(loss, 0.0);
  EXPECT_LE(loss, 2.0);
  EXPECT_NEAR(*IdentityLoss(3.7 * frames, ref, probes), loss, 1e-12);
}

TEST(PerceptualLossTest, HandExamples) {
  const FrozenProbes one = IdentityProbes(1);
  EXPECT_DOUBLE_EQ(*PerceptualLoss(Rows({{2}}), Rows({{0}}), one), 2.0);
  const FrozenProbes probes = FrozenProbes::Create(4, 2, 3, 1);
  Rng rng(3);
  const Matrix x = GaussianMatrix(3, 4, 1.0, rng);
  EXPECT_EQ(*PerceptualLoss(x, x, probes), 0.0);
}

TEST(PerceptualLossTest, TriangleInequality) {
  const FrozenProbes probes = FrozenProbes::Create(4, 2, 3, 1);
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix x = GaussianMatrix(3, 4, 1.0, rng);
    const Matrix y = GaussianMatrix(3, 4, 1.0, rng);
    const Matrix z = GaussianMatrix(3, 4, 1.0, rng);
    EXPECT_LE(*PerceptualLoss(x, z, probes),
              *PerceptualLoss(x, y, probes) + *PerceptualLoss(y, z, probes) +
                  1e-12);
    EXPECT_NEAR(*PerceptualLoss(x, y, probes), *PerceptualLoss(y, x, probes),
                1e-15);
  }
}

TEST(SyncProxyLossTest, CorrelationCases) {
  // Conditioning steps of sizes 1, 3, 2 along one axis.
  const Matrix cond = Rows({{0, 0}, {1, 0}, {4, 0}, {6, 0}});
  Matrix frames(4, 3);
  for (int f = 0; f < 4; ++f) frames.row(f) << 2 * cond(f, 0), 0, 0;
  EXPECT_NEAR(*SyncProxyLoss(frames, cond), 0.0, 1e-12);

  // Frame step sizes 3, 1, 2: decreasing exactly where conditioning grows.
  Matrix anti(4, 3);
  const double steps[] = {0, 3, 4, 6};
  for (int f = 0; f < 4; ++f) anti.row(f) << steps[f], 0, 0;
  // |dc| = (1,3,2) and |dx| = (3,1,2): correlation -1.
  EXPECT_NEAR(*SyncProxyLoss(anti, cond), 2.0, 1e-12);

  const Matrix constant = Matrix::Ones(4, 2);
  EXPECT_EQ(*SyncProxyLoss(frames, constant), 1.0);
}

TEST(CombinedLossTest, HandExamples) {
  LossBreakdown parts{0.5, 0.2, 0.1, 0.1, 0.1, 0.0};
  absl::StatusOr<LossBreakdown> out =
      CombinedLoss(parts, LossWeights{1.0, 2.0, 1.0, 0.5});
  ASSERT_TRUE(out.ok());
  EXPECT_NEAR(out->total, 1.05, 1e-15);

  LossBreakdown ones{1, 1, 1, 1, 1, 0};
  EXPECT_DOUBLE_EQ(CombinedLoss(ones, LossWeights{1, 1, 1, 1})->total, 5.0);
  EXPECT_DOUBLE_EQ(CombinedLoss(parts, LossWeights{0, 0, 0, 0})->total, 0.5);
}

TEST(CombinedLossTest, RejectsNonFiniteTerms) {
  LossBreakdown parts{0.5, NAN, 0.1, 0.1, 0.1, 0.0};
  EXPECT_FALSE(CombinedLoss(parts, LossWeights{}).ok());
  parts.tdc = INFINITY;
  EXPECT_FALSE(CombinedLoss(parts, LossWeights{}).ok());
}

TEST(FrozenProbesTest, DeterministicAndUnitNorm) {
  const FrozenProbes a = FrozenProbes::Create(6, 4, 5, 77);
  const FrozenProbes b = FrozenProbes::Create(6, 4, 5, 77);
  EXPECT_EQ(a.identity_map(), b.identity_map());
  EXPECT_EQ(a.perceptual_map(), b.perceptual_map());
  Rng rng(1);
  const Vector e = *a.IdentityEmbedding(GaussianVector(6, 1.0, rng));
  EXPECT_NEAR(e.norm(), 1.0, 1e-12);
}

// Every analytic gradient of the loss terms against central differences.
TEST(LossGradientTest, MatchesFiniteDifferences) {
  const FrozenProbes probes = FrozenProbes::Create(3, 2, 4, 9);
  Rng rng(21);
  const Matrix truth = GaussianMatrix(4, 3, 1.0, rng);
  const Matrix target = GaussianMatrix(4, 3, 1.0, rng);
  const Matrix cond = GaussianMatrix(4, 2, 1.0, rng);
  const Vector ref = GaussianVector(2, 1.0, rng).normalized();
  const Matrix x = GaussianMatrix(4, 3, 1.0, rng);

  struct Term {
    const char* name;
    std::function<absl::StatusOr<double>(const Matrix&)> value;
    std::function<absl::StatusOr<LossWithGrad>(const Matrix&)> grad;
  };
  const Term terms[] = {
      {"diffusion", [&](const Matrix& m) { return DiffusionLoss(truth, m); },
       [&](const Matrix& m) { return DiffusionLossWithGrad(truth, m); }},
      {"tdc", [&](const Matrix& m) { return TdcLoss(truth, m); },
       [&](const Matrix& m) { return TdcLossWithGrad(truth, m); }},
      {"identity", [&](const Matrix& m) { return IdentityLoss(m, ref, probes); },
       [&](const Matrix& m) { return IdentityLossWithGrad(m, ref, probes); }},
      {"perceptual",
       [&](const Matrix& m) { return PerceptualLoss(m, target, probes); },
       [&](const Matrix& m) {
         return PerceptualLossWithGrad(m, target, probes);
       }},
      {"sync", [&](const Matrix& m) { return SyncProxyLoss(m, cond); },
       [&](const Matrix& m) { return SyncProxyLossWithGrad(m, cond); }},
  };
  constexpr double kStep = 1e-6;
  for (const Term& term : terms) {
    absl::StatusOr<LossWithGrad> analytic = term.grad(x);
    ASSERT_TRUE(analytic.ok()) << term.name;
    EXPECT_DOUBLE_EQ(analytic->value, *term.value(x)) << term.name;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Matrix plus = x, minus = x;
      plus.data()[i] += kStep;
      minus.data()[i] -= kStep;
      const double fd =
          (*term.value(plus) - *term.value(minus)) / (2.0 * kStep);
      const double g = analytic->grad.data()[i];
      EXPECT_LE(std::abs(g - fd), 1e-5 * std::max({std::abs(g), std::abs(fd), 1.0}))
          << term.name << " coordinate " << i;
    }
  }
}

}  // namespace
}  // namespace fedtalk
