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

// Declarative experiment description: model variant, ablation flags, loss
// weights, schedule and dataset. Serialized as JSON with a schema version;
// unknown keys are rejected.

#ifndef FDVAE_CONFIG_HPP_
#define FDVAE_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdvae/datasets.hpp"
#include "fdvae/losses.hpp"
#include "fdvae/model.hpp"

namespace fdvae::exp {

inline constexpr int kSchemaVersion = 1;

enum class Variant { kFdVae, kVae, kBetaVae, kFactorVae, kFfVaeApprox };

enum class DownstreamInput {
  kFull,                 // all 60 latent dims
  kZtOnly,               // z_t
  kZtPlusRawZm,          // z_t + z_m
  kZtPlusTransformedZm,  // z_t + f(z_m)
  kSensitiveOnly,        // 30-dim sensitive block
  kNonsensitiveOnly,     // 30-dim non-sensitive block
  kLatentRemovalK1,      // full z, most protected-correlated dim zeroed
  kLatentRemovalK2,      // full z, two such dims zeroed
};

std::string ToString(Variant v);
std::string ToString(DownstreamInput d);
Variant ParseVariant(const std::string& s);
DownstreamInput ParseDownstreamInput(const std::string& s);

struct Ablation {
  bool use_cls = true;
  bool use_adv = true;
  bool use_mal = true;
  DownstreamInput downstream_input = DownstreamInput::kZtPlusTransformedZm;

  friend bool operator==(const Ablation&, const Ablation&) = default;
};

// Per-variant defaults for the ablation section.
Ablation DefaultAblation(Variant v);

// Defaults are the full-scale CelebA schedule (80 representation epochs
// for UTKFace).
struct TrainSchedule {
  std::size_t repr_epochs = 120;
  std::size_t downstream_epochs = 30;
  double repr_lr = 1e-4;
  double downstream_lr = 1e-6;
  // Adversary heads of the representation phase train at repr_lr * this.
  double adversary_lr_scale = 1.0;
  // Adversary updates per encoder step; extra ones reuse the step's codes.
  std::size_t adversary_steps = 1;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;
  std::string optimizer = "adam";
  double beta1 = 0.9;
  double beta2 = 0.999;

  friend bool operator==(const TrainSchedule&, const TrainSchedule&) = default;
};

struct DatasetSection {
  enum class Kind { kSynthetic, kAttribute };
  Kind kind = Kind::kSynthetic;
  data::SyntheticSpec synthetic;
  // Attribute datasets.
  std::string root;
  data::AttributePair pair;
  // Use partition.csv splits when no composition is given.
  std::optional<data::CompositionSpec> composition;

  std::string id() const;
  friend bool operator==(const DatasetSection&, const DatasetSection&) = default;
};

struct ExperimentConfig {
  std::string name = "experiment";
  Variant variant = Variant::kFdVae;
  Ablation ablation;
  loss::LossWeights weights;
  TrainSchedule schedule;
  DatasetSection dataset;
  std::vector<std::uint64_t> seeds = {0, 1, 2};

  // Throws ConfigError (InconsistentConfig, InvalidSchedule, ...).
  void Validate() const;
  std::string variant_id() const;  // e.g. "fdvae+zt_plus_transformed_zm"

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// Desk-scale defaults: 2000 synthetic train images, 10 + 10 epochs at
// batch 16.
ExperimentConfig DeskScaleConfig(Variant variant);

nlohmann::json ToJson(const ExperimentConfig& config);
ExperimentConfig ConfigFromJson(const nlohmann::json& j);
ExperimentConfig LoadConfig(const std::filesystem::path& path);
void SaveConfig(const std::filesystem::path& path, const ExperimentConfig& config);

// Applies `dotted.key=value` overrides. Keys must exist in the schema.
ExperimentConfig ApplyOverrides(const ExperimentConfig& config,
                                std::span<const std::string> overrides);

// Stable across key order and whitespace; ignores the seeds list and the
// run seed so every seed of one experiment shares a hash.
std::string ConfigHash(const ExperimentConfig& config);

// Which loss terms a variant trains, and where its heads read from.
struct ActiveTerms {
  bool recon = true;
  bool kl = true;
  double kl_weight = 1.0;
  bool tc = false;             // alpha * tc on the encoder side
  bool discriminator = false;  // discriminator trained on shuffled fakes
  bool cls_t = false;
  bool cls_p = false;
  bool adv = false;
  model::LatentLayout layout = model::LatentLayout::ThreeWay();
  std::string target_block = "TAL";
  std::string protected_block = "PAL";

  std::size_t count() const;
  std::string Describe() const;
};

ActiveTerms VariantLossMask(const ExperimentConfig& config);
model::ModelSpec ModelSpecFor(const ExperimentConfig& config);
model::DownstreamSpec DownstreamSpecFor(const ExperimentConfig& config);

// Task-head input for a batch of full latent codes z [B,60] cut by `layout`.
// `transformed_zm` is f(z_m), required for kZtPlusTransformedZm.
Tensor DownstreamInputVector(DownstreamInput kind, const model::LatentLayout& layout,
                             const Tensor& z,
                             std::span<const std::size_t> removed_dims,
                             const Tensor* transformed_zm = nullptr);

}  // namespace fdvae::exp

#endif  // FDVAE_CONFIG_HPP_
