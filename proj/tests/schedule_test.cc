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
#include "fedtalk/schedule.h"

#include <cmath>

#include "fedtalk/random.h"
#include "fedtalk/tensor.h"
#include "gtest/gtest.h"

namespace fedtalk {
namespace {

TEST(LinearScheduleTest, SingleStepUsesBetaStart) {
  absl::StatusOr<NoiseSchedule> s = BuildLinearSchedule(1, 0.1, 0.4);
  ASSERT_TRUE(s.ok()) << s.status();
  ASSERT_EQ(s->steps(), 1);
  EXPECT_DOUBLE_EQ(s->betas()[0], 0.1);
  EXPECT_NEAR(s->alpha_bars()[0], 0.9, 1e-15);
}

TEST(LinearScheduleTest, FourStepsByHand) {
  absl::StatusOr<NoiseSchedule> s = BuildLinearSchedule(4, 0.1, 0.4);
  ASSERT_TRUE(s.ok()) << s.status();
  const double alphas[] = {0.9, 0.8, 0.7, 0.6};
  const double alpha_bars[] = {0.9, 0.72, 0.504, 0.3024};
  for (int t = 0; t < 4; ++t) {
    EXPECT_NEAR(s->alphas()[t], alphas[t], 1e-15);
    EXPECT_NEAR(s->alpha_bars()[t], alpha_bars[t], 1e-15);
  }
}

TEST(LinearScheduleTest, ConstantScheduleGivesPowers) {
  absl::StatusOr<NoiseSchedule> s = BuildLinearSchedule(2, 0.5, 0.5);
  ASSERT_TRUE(s.ok());
  EXPECT_DOUBLE_EQ(s->alpha_bars()[0], 0.5);
  EXPECT_DOUBLE_EQ(s->alpha_bars()[1], 0.25);
}

TEST(LinearScheduleTest, RejectsInvalidArguments) {
  EXPECT_FALSE(BuildLinearSchedule(0, 0.1, 0.2).ok());
  EXPECT_FALSE(BuildLinearSchedule(-3, 0.1, 0.2).ok());
  EXPECT_FALSE(BuildLinearSchedule(5, 0.0, 0.2).ok());
  EXPECT_FALSE(BuildLinearSchedule(5, 0.1, 1.0).ok());
  EXPECT_FALSE(BuildLinearSchedule(5, 0.3, 0.2).ok());
  EXPECT_FALSE(NoiseSchedule::FromBetas({0.1, 1.5}).ok());
  EXPECT_FALSE(NoiseSchedule::FromBetas({}).ok());
}

TEST(LinearScheduleTest, DefaultInvariants) {
  absl::StatusOr<NoiseSchedule> s = BuildLinearSchedule(
      kDefaultDiffusionSteps, kDefaultBetaStart, kDefaultBetaEnd);
  ASSERT_TRUE(s.ok());
  EXPECT_DOUBLE_EQ(s->betas().front(), kDefaultBetaStart);
  EXPECT_DOUBLE_EQ(s->betas().back(), kDefaultBetaEnd);
  double product = 1.0;
  for (int t = 0; t < s->steps(); ++t) {
    EXPECT_GT(s->betas()[t], 0.0);
    EXPECT_LT(s->betas()[t], 1.0);
    EXPECT_EQ(s->alphas()[t], 1.0 - s->betas()[t]);
    product *= s->alphas()[t];
    EXPECT_NEAR(s->alpha_bars()[t], product, 1e-12 * product);
    if (t > 0) EXPECT_LT(s->alpha_bars()[t], s->alpha_bars()[t - 1]);
  }
}

TEST(ForwardDiffuseTest, ScalarByHand) {
  absl::StatusOr<NoiseSchedule> s = NoiseSchedule::FromBetas({0.75});
  ASSERT_TRUE(s.ok());
  Matrix z0(1, 1), noise(1, 1);
  z0 << 2.0;
  noise << 4.0;
  absl::StatusOr<Matrix> z = ForwardDiffuse(*s, z0, 0, noise);
  ASSERT_TRUE(z.ok());
  EXPECT_NEAR((*z)(0, 0), 1.0 + 2.0 * std::sqrt(3.0), 1e-12);
  EXPECT_NEAR((*z)(0, 0), 4.4641, 1e-4);
}

TEST(ForwardDiffuseTest, ZeroNoiseScales) {
  Matrix z0 = Matrix::Ones(1, 2);
  Matrix z = ForwardDiffuseWithAlphaBar(0.81, z0, Matrix::Zero(1, 2));
  EXPECT_NEAR(z(0, 0), 0.9, 1e-15);
  EXPECT_NEAR(z(0, 1), 0.9, 1e-15);
  EXPECT_EQ(ForwardDiffuseWithAlphaBar(1.0, z0, Matrix::Ones(1, 2)), z0);
}

TEST(ForwardDiffuseTest, RejectsBadStepOrShape) {
  absl::StatusOr<NoiseSchedule> s = BuildLinearSchedule(4, 0.1, 0.4);
  ASSERT_TRUE(s.ok());
  const Matrix z0 = Matrix::Zero(2, 3);
  EXPECT_FALSE(ForwardDiffuse(*s, z0, 4, Matrix::Zero(2, 3)).ok());
  EXPECT_FALSE(ForwardDiffuse(*s, z0, -1, Matrix::Zero(2, 3)).ok());
  EXPECT_FALSE(ForwardDiffuse(*s, z0, 1, Matrix::Zero(3, 2)).ok());
}

// Marginal statistics of q(z_t | z_0) against the closed form, both for the
// direct sample and for t+1 chained single-step transitions.
TEST(ForwardDiffuseTest, MarginalStatistics) {
  absl::StatusOr<NoiseSchedule> s = BuildLinearSchedule(10, 0.02, 0.2);
  ASSERT_TRUE(s.ok());
  constexpr int kDraws = 100000;
  constexpr int kT = 6;
  Matrix z0(1, 2);
  z0 << 1.5, -0.5;
  const double ab = s->alpha_bars()[kT];
  Rng rng(9);
  for (bool chained : {false, true}) {
    Eigen::Array2d sum = Eigen::Array2d::Zero(), sum2 = Eigen::Array2d::Zero();
    for (int i = 0; i < kDraws; ++i) {
      Matrix z;
      if (chained) {
        z = z0;
        for (int t = 0; t <= kT; ++t) {
          z = ForwardStep(*s, z, t, GaussianMatrix(1, 2, 1.0, rng));
        }
      } else {
        z = *ForwardDiffuse(*s, z0, kT, GaussianMatrix(1, 2, 1.0, rng));
      }
      for (int d = 0; d < 2; ++d) {
        sum[d] += z(0, d);
        sum2[d] += z(0, d) * z(0, d);
      }
    }
    for (int d = 0; d < 2; ++d) {
      const double mean = sum[d] / kDraws;
      const double var = sum2[d] / kDraws - mean * mean;
      const double se = std::sqrt((1.0 - ab) / kDraws);
      EXPECT_LT(std::abs(mean - std::sqrt(ab) * z0(0, d)), 3.0 * se)
          << "chained=" << chained;
      EXPECT_LT(std::abs(var / (1.0 - ab) - 1.0), 0.05) << "chained=" << chained;
    }
  }
}

}  // namespace
}  // namespace fedtalk
