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
#ifndef FEDTALK_SCHEDULE_H_
#define FEDTALK_SCHEDULE_H_

#include <vector>

#include "absl/status/statusor.h"
#include "fedtalk/tensor.h"

namespace fedtalk {

// Variance schedule of the discrete diffusion process. Step indices are
// zero-based: step t uses betas()[t], and alpha_bars()[t] is the product of
// alphas()[0..t]. Immutable once built.
class NoiseSchedule {
 public:
  static absl::StatusOr<NoiseSchedule> FromBetas(std::vector<double> betas);

  int steps() const { return static_cast<int>(betas_.size()); }
  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alphas() const { return alphas_; }
  const std::vector<double>& alpha_bars() const { return alpha_bars_; }

 private:
  NoiseSchedule() = default;

  std::vector<double> betas_;
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
};

inline constexpr int kDefaultDiffusionSteps = 50;
inline constexpr double kDefaultBetaStart = 1e-4;
inline constexpr double kDefaultBetaEnd = 0.02;

// Betas interpolated linearly from beta_start to beta_end inclusive. A single
// step uses beta_start.
absl::StatusOr<NoiseSchedule> BuildLinearSchedule(int steps, double beta_start,
                                                  double beta_end);

// Closed-form sample of q(z_t | z_0):
//   sqrt(alpha_bar_t) * z0 + sqrt(1 - alpha_bar_t) * noise.
absl::StatusOr<Matrix> ForwardDiffuse(const NoiseSchedule& schedule,
                                      const Matrix& z0, int t,
                                      const Matrix& noise);

// Same as ForwardDiffuse with an explicit cumulative coefficient.
Matrix ForwardDiffuseWithAlphaBar(double alpha_bar, const Matrix& z0,
                                  const Matrix& noise);

// One transition of q(z_t | z_{t-1}) at step t.
Matrix ForwardStep(const NoiseSchedule& schedule, const Matrix& z_prev, int t,
                   const Matrix& noise);

}  // namespace fedtalk

#endif  // FEDTALK_SCHEDULE_H_
