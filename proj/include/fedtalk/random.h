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
#ifndef FEDTALK_RANDOM_H_
#define FEDTALK_RANDOM_H_

#include <array>
#include <cstdint>
#include <initializer_list>

namespace fedtalk {

// Philox4x32-10 block function (Salmon et al., Random123). Maps a 128-bit
// counter and 64-bit key to 128 pseudorandom bits.
std::array<uint32_t, 4> Philox4x32(std::array<uint32_t, 4> counter,
                                   std::array<uint32_t, 2> key);

// Hashes a base seed and a path of integers into a stream key. Every stream in
// the simulator is addressed this way, e.g. DeriveSeed(run_seed, {kTrain,
// round, client_id}), so no stream depends on how many draws another consumed.
uint64_t DeriveSeed(uint64_t base, std::initializer_list<uint64_t> path);

// Stream tags used with DeriveSeed.
enum StreamTag : uint64_t {
  kTagWorld = 1,
  kTagBackbone = 2,
  kTagProbes = 3,
  kTagAdapterInit = 4,
  kTagClientSampling = 5,
  kTagLocalTrain = 6,
  kTagDpNoise = 7,
  kTagReliability = 8,
  kTagPairwiseMask = 9,
  kTagDropout = 10,
  kTagEval = 11,
  kTagPretrain = 12,
};

// Counter-mode generator over Philox4x32-10. The counter is the block index,
// so the n-th output of a stream is a pure function of (key, n).
//
// Normal draws use the Box-Muller transform on two 53-bit uniforms; both
// outputs of a pair are consumed in order.
class Rng {
 public:
  explicit Rng(uint64_t key);

  uint64_t NextU64();
  // Uniform in [0, 1) with 53 bits of precision.
  double Uniform();
  // Uniform in {0, ..., n - 1}; n must be positive.
  uint64_t UniformInt(uint64_t n);
  double Normal();

 private:
  uint32_t NextU32();

  std::array<uint32_t, 2> key_;
  uint64_t block_index_ = 0;
  std::array<uint32_t, 4> block_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fedtalk

#endif  // FEDTALK_RANDOM_H_
