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

#ifndef FDVAE_CHECKPOINT_HPP_
#define FDVAE_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fdvae/config.hpp"
#include "fdvae/model.hpp"

namespace fdvae {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// A model snapshot plus the config that produced it.
//
// File layout: "FDVAECK1", u32 format version, u64 header length, a JSON
// header (config, hash, seed, epoch, log digest, tensor index) and the raw
// little-endian float32 parameter data in index order.
struct Checkpoint {
  exp::ExperimentConfig config;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  std::string log_digest;
  std::string phase = "representation";  // or "downstream"
  std::vector<std::size_t> removed_dims;  // latent-removal baselines
  std::shared_ptr<model::ModelBundle> bundle;

  bool has_downstream() const { return bundle && bundle->downstream; }
};

// Builds an untrained bundle for the config and seed.
Checkpoint NewCheckpoint(const exp::ExperimentConfig& config, std::uint64_t seed);

void SaveCheckpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
// Throws IncompatibleCheckpoint on a bad magic/version, a config hash that
// does not match the stored config, or a tensor set that the config's
// architecture does not produce.
Checkpoint LoadCheckpoint(const std::filesystem::path& path);

}  // namespace fdvae

#endif  // FDVAE_CHECKPOINT_HPP_
