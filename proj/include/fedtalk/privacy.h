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
#ifndef FEDTALK_PRIVACY_H_
#define FEDTALK_PRIVACY_H_

#include <cstdint>
#include <span>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "fedtalk/random.h"

namespace fedtalk {

struct DpConfig {
  bool enabled = false;
  double clip_norm = 0.5;
  double noise_multiplier = 0.1;

  absl::Status Validate() const;
};

double L2Norm(std::span<const double> v);

// delta / max(1, ||delta|| / C) + N(0, (sigma C)^2 I). Applies regardless of
// config.enabled; callers decide whether to protect.
absl::StatusOr<std::vector<double>> ClipAndNoise(std::span<const double> delta,
                                                 const DpConfig& config,
                                                 Rng& rng);

// Pairwise additive masking among one round's participants. This simulates
// the arithmetic of secure aggregation over the reals and offers no actual
// secrecy: anyone holding the run seed can regenerate every mask.
class MaskingSession {
 public:
  // Participants must be distinct; they are kept sorted.
  static absl::StatusOr<MaskingSession> Create(uint64_t run_seed, int round,
                                               std::vector<int> participants,
                                               size_t length);

  int round() const { return round_; }
  size_t length() const { return length_; }
  const std::vector<int>& participants() const { return participants_; }
  bool Contains(int id) const;

  // Symmetric in (i, j).
  uint64_t PairSeed(int i, int j) const;
  // Standard-normal stream of `length` values from PairSeed(i, j).
  std::vector<double> PairMask(int i, int j) const;

 private:
  MaskingSession(uint64_t run_seed, int round, std::vector<int> participants,
                 size_t length)
      : run_seed_(run_seed),
        round_(round),
        participants_(std::move(participants)),
        length_(length) {}

  uint64_t run_seed_;
  int round_;
  std::vector<int> participants_;
  size_t length_;
};

// protected + sum_{j > i} PairMask(i, j) - sum_{j < i} PairMask(j, i).
absl::StatusOr<std::vector<double>> MaskUpdate(
    std::span<const double> protected_update, int self_id,
    const MaskingSession& session);

// Removes the masks that received clients added for dropped partners, so the
// result is the plain sum of the received protected vectors.
absl::StatusOr<std::vector<double>> UnmaskDropouts(
    std::span<const double> sum_of_received, const MaskingSession& session,
    std::span<const int> received_ids, std::span<const int> dropped_ids);

}  // namespace fedtalk

#endif  // FEDTALK_PRIVACY_H_
