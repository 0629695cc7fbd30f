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
#include "fedtalk/privacy.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "absl/strings/str_cat.h"

namespace fedtalk {

absl::Status DpConfig::Validate() const {
  if (!(clip_norm > 0.0) || !std::isfinite(clip_norm)) {
    return absl::InvalidArgumentError("clip_norm must be positive and finite");
  }
  if (!(noise_multiplier >= 0.0) || !std::isfinite(noise_multiplier)) {
    return absl::InvalidArgumentError(
        "noise_multiplier must be nonnegative and finite");
  }
  return absl::OkStatus();
}

double L2Norm(std::span<const double> v) {
  // Scaled accumulation, so huge coordinates do not overflow.
  double scale = 0.0;
  for (double x : v) scale = std::max(scale, std::abs(x));
  if (scale == 0.0 || !std::isfinite(scale)) return scale;
  double sum = 0.0;
  for (double x : v) sum += (x / scale) * (x / scale);
  return scale * std::sqrt(sum);
}

absl::StatusOr<std::vector<double>> ClipAndNoise(std::span<const double> delta,
                                                 const DpConfig& config,
                                                 Rng& rng) {
  if (absl::Status s = config.Validate(); !s.ok()) return s;
  if (!std::all_of(delta.begin(), delta.end(),
                   [](double v) { return std::isfinite(v); })) {
    return absl::InvalidArgumentError("cannot clip a non-finite update");
  }
  const double norm = L2Norm(delta);
  std::vector<double> out(delta.begin(), delta.end());
  if (norm > config.clip_norm) {
    // Dividing by the norm first keeps the result inside the ball after
    // rounding.
    const double factor = config.clip_norm / norm;
    for (double& v : out) v *= factor;
    double clipped = L2Norm(out);
    while (clipped > config.clip_norm) {
      for (double& v : out) v = std::nextafter(v, 0.0);
      clipped = L2Norm(out);
    }
  }
  const double stddev = config.noise_multiplier * config.clip_norm;
  if (stddev > 0.0) {
    for (double& v : out) v += stddev * rng.Normal();
  }
  return out;
}

absl::StatusOr<MaskingSession> MaskingSession::Create(
    uint64_t run_seed, int round, std::vector<int> participants,
    size_t length) {
  std::sort(participants.begin(), participants.end());
  if (std::adjacent_find(participants.begin(), participants.end()) !=
      participants.end()) {
    return absl::InvalidArgumentError("duplicate masking participant");
  }
  return MaskingSession(run_seed, round, std::move(participants), length);
}

bool MaskingSession::Contains(int id) const {
  return std::binary_search(participants_.begin(), participants_.end(), id);
}

uint64_t MaskingSession::PairSeed(int i, int j) const {
  const auto lo = static_cast<uint64_t>(std::min(i, j));
  const auto hi = static_cast<uint64_t>(std::max(i, j));
  return DeriveSeed(run_seed_, {kTagPairwiseMask,
                                static_cast<uint64_t>(round_), lo, hi});
}

std::vector<double> MaskingSession::PairMask(int i, int j) const {
  Rng rng(PairSeed(i, j));
  std::vector<double> mask(length_);
  for (double& v : mask) v = rng.Normal();
  return mask;
}

namespace {

// Adds sign * (mask that client `self` applies for partner `other`).
void AddPairTerm(const MaskingSession& session, int self, int other,
                 double sign, std::vector<double>& out) {
  const std::vector<double> mask = session.PairMask(self, other);
  const double s = other > self ? sign : -sign;
  for (size_t k = 0; k < out.size(); ++k) out[k] += s * mask[k];
}

}  // namespace

absl::StatusOr<std::vector<double>> MaskUpdate(
    std::span<const double> protected_update, int self_id,
    const MaskingSession& session) {
  if (!session.Contains(self_id)) {
    return absl::InvalidArgumentError(
        absl::StrCat("client ", self_id, " is not in the masking session"));
  }
  if (protected_update.size() != session.length()) {
    return absl::InvalidArgumentError("update length differs from session");
  }
  std::vector<double> out(protected_update.begin(), protected_update.end());
  for (int other : session.participants()) {
    if (other != self_id) AddPairTerm(session, self_id, other, 1.0, out);
  }
  return out;
}

absl::StatusOr<std::vector<double>> UnmaskDropouts(
    std::span<const double> sum_of_received, const MaskingSession& session,
    std::span<const int> received_ids, std::span<const int> dropped_ids) {
  if (sum_of_received.size() != session.length()) {
    return absl::InvalidArgumentError("aggregate length differs from session");
  }
  std::set<int> seen;
  for (std::span<const int> ids : {received_ids, dropped_ids}) {
    for (int id : ids) {
      if (!session.Contains(id)) {
        return absl::InvalidArgumentError(
            absl::StrCat("client ", id, " is not in the masking session"));
      }
      if (!seen.insert(id).second) {
        return absl::InvalidArgumentError(absl::StrCat(
            "client ", id, " is listed twice among received and dropped"));
      }
    }
  }
  if (seen.size() != session.participants().size()) {
    return absl::InvalidArgumentError(
        "received and dropped clients must cover every participant");
  }
  std::vector<double> out(sum_of_received.begin(), sum_of_received.end());
  for (int r : received_ids) {
    for (int d : dropped_ids) AddPairTerm(session, r, d, -1.0, out);
  }
  return out;
}

}  // namespace fedtalk
