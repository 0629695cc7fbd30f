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
#include <utility>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"

namespace fedtalk {

absl::StatusOr<NoiseSchedule> NoiseSchedule::FromBetas(
    std::vector<double> betas) {
  if (betas.empty()) {
    return absl::InvalidArgumentError("schedule needs at least one step");
  }
  for (size_t t = 0; t < betas.size(); ++t) {
    if (!(betas[t] > 0.0 && betas[t] < 1.0)) {
      return absl::InvalidArgumentError(
          absl::StrCat("beta[", t, "] = ", betas[t], " is outside (0, 1)"));
    }
  }
  NoiseSchedule schedule;
  schedule.alphas_.reserve(betas.size());
  schedule.alpha_bars_.reserve(betas.size());
  double running = 1.0;
  for (double beta : betas) {
    const double alpha = 1.0 - beta;
    running *= alpha;
    schedule.alphas_.push_back(alpha);
    schedule.alpha_bars_.push_back(running);
  }
  schedule.betas_ = std::move(betas);
  return schedule;
}

absl::StatusOr<NoiseSchedule> BuildLinearSchedule(int steps, double beta_start,
                                                  double beta_end) {
  if (steps < 1) {
    return absl::InvalidArgumentError(
        absl::StrCat("diffusion steps must be positive, got ", steps));
  }
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("need 0 < beta_start <= beta_end < 1, got beta_start=",
                     beta_start, " beta_end=", beta_end));
  }
  std::vector<double> betas(steps);
  for (int t = 0; t < steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t) / (steps - 1);
    betas[t] = beta_start + frac * (beta_end - beta_start);
  }
  return NoiseSchedule::FromBetas(std::move(betas));
}

Matrix ForwardDiffuseWithAlphaBar(double alpha_bar, const Matrix& z0,
                                  const Matrix& noise) {
  return std::sqrt(alpha_bar) * z0 + std::sqrt(1.0 - alpha_bar) * noise;
}

absl::StatusOr<Matrix> ForwardDiffuse(const NoiseSchedule& schedule,
                                      const Matrix& z0, int t,
                                      const Matrix& noise) {
  if (t < 0 || t >= schedule.steps()) {
    return absl::OutOfRangeError(absl::StrCat(
        "diffusion step ", t, " outside [0, ", schedule.steps(), ")"));
  }
  if (z0.rows() != noise.rows() || z0.cols() != noise.cols()) {
    return absl::InvalidArgumentError(
        absl::StrCat("noise shape ", noise.rows(), "x", noise.cols(),
                     " does not match latent shape ", z0.rows(), "x",
                     z0.cols()));
  }
  return ForwardDiffuseWithAlphaBar(schedule.alpha_bars()[t], z0, noise);
}

Matrix ForwardStep(const NoiseSchedule& schedule, const Matrix& z_prev, int t,
                   const Matrix& noise) {
  const double beta = schedule.betas()[t];
  return std::sqrt(1.0 - beta) * z_prev + std::sqrt(beta) * noise;
}

}  // namespace fedtalk
