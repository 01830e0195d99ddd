/*
 * Copyright 2026 The FD-VAE Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FDVAE_RANDOM_HPP_
#define FDVAE_RANDOM_HPP_

#include <cstdint>
#include <random>
#include <vector>

namespace fdvae {

using RandomEngine = std::mt19937_64;

// Named, independent random streams derived from one run seed. Each consumer
// (weight init, batch order, reparameterization noise, ...) owns a stream so
// that adding a consumer never perturbs another one's draws.
enum class Stream : std::uint32_t {
  kEncoderInit = 1,
  kDecoderInit = 2,
  kDiscriminatorInit = 3,
  kHeadInit = 4,
  kBatchOrder = 5,
  kNoise = 6,
  kShuffle = 7,
  kDownstreamInit = 8,
  kDownstreamNoise = 9,
  kSplit = 10,
  kSynthetic = 11,
  kProbe = 12,
};

inline RandomEngine MakeEngine(std::uint64_t seed, std::uint64_t stream,
                               std::uint64_t sub = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(sub),
                    static_cast<std::uint32_t>(sub >> 32)};
  return RandomEngine(seq);
}

inline RandomEngine MakeEngine(std::uint64_t seed, Stream stream,
                               std::uint64_t sub = 0) {
  return MakeEngine(seed, static_cast<std::uint64_t>(stream), sub);
}

// Fisher-Yates permutation of 0..n-1.
inline std::vector<std::size_t> RandomPermutation(std::size_t n,
                                                  RandomEngine& rng) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(perm[i - 1], perm[pick(rng)]);
  }
  return perm;
}

}  // namespace fdvae

#endif  // FDVAE_RANDOM_HPP_
