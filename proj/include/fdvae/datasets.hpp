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

// Labeled face-attribute data: annotation ingestion, skewed-train /
// balanced-eval composition, a synthetic biased image generator and seeded
// mini-batching.
//
// On-disk layout of a dataset root:
//   <root>/images/<file>
//   <root>/annotations.csv   header `file,<attr1>,<attr2>,...`, values 0/1
//   <root>/partition.csv     optional, `file,split` with split in
//                            {train,val,test}

#ifndef FDVAE_DATASETS_HPP_
#define FDVAE_DATASETS_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdvae/tensor.hpp"

namespace fdvae::data {

inline constexpr std::size_t kImageSize = 64;
inline constexpr std::size_t kPixelsPerImage = 3 * kImageSize * kImageSize;

struct AttributePair {
  std::string target_name;
  std::string protected_name;
  // Raw label that maps to 1 for each attribute (the annotation file stores
  // 0/1; setting 0 inverts the attribute).
  std::uint8_t target_positive = 1;
  std::uint8_t protected_positive = 1;

  void Validate() const;
  std::string id() const { return target_name + "|" + protected_name; }
  friend bool operator==(const AttributePair&, const AttributePair&) = default;
};

// The four pairs studied on CelebA: (target, protected).
std::vector<AttributePair> CelebAPairs();

// A record before its pixels are loaded. Labels are optional so that
// partially annotated pools can be rejected with MissingLabel.
struct LabeledRecord {
  std::string id;
  std::filesystem::path image_path;
  std::optional<std::uint8_t> target;
  std::optional<std::uint8_t> protected_label;
};

enum class SplitName { kTrain = 0, kValidation = 1, kTest = 2 };
inline constexpr std::array<const char*, 3> kSplitNames = {"train", "val", "test"};

struct CompositionSpec {
  // counts[split][target][protected]
  std::array<std::array<std::array<std::size_t, 2>, 2>, 3> counts{};
  std::uint64_t seed = 0;

  std::size_t& Cell(SplitName split, int target, int protected_label) {
    return counts[static_cast<int>(split)][target][protected_label];
  }
  std::size_t Cell(SplitName split, int target, int protected_label) const {
    return counts[static_cast<int>(split)][target][protected_label];
  }
  std::size_t SplitTotal(SplitName split) const;

  // Validation and test cells must each be equal within their split.
  void Validate() const;

  // 10k skewed train (4:1 in favour of agreement for ethnicity, the reverse
  // for age) and 600 per (target, protected) cell for validation and test.
  static CompositionSpec UtkFaceEthnicity(std::uint64_t seed = 0);
  static CompositionSpec UtkFaceAge(std::uint64_t seed = 0);

  friend bool operator==(const CompositionSpec&, const CompositionSpec&) = default;
};

nlohmann::json ToJson(const CompositionSpec& spec);
CompositionSpec CompositionSpecFromJson(const nlohmann::json& j);

template <typename T>
struct Splits {
  T train, validation, test;
};

using RecordSplits = Splits<std::vector<LabeledRecord>>;

// Seeded, order-invariant composition. Each cell's records are ranked by a
// seeded hash of their id and consumed as train, then validation, then test
// prefixes, so no record lands in two splits.
RecordSplits ComposeSplit(std::span<const LabeledRecord> records,
                          const CompositionSpec& spec);

// Records of one split ("train", "val", "test", or "all") of a dataset root.
std::vector<LabeledRecord> LoadAttributeDataset(const std::filesystem::path& root,
                                                const AttributePair& pair,
                                                const std::string& split);

// Rewrites a UTKFace directory (`<age>_<gender>_<race>_<date>.jpg`) into the
// dataset layout with attributes male, young (age <= 35), caucasian.
std::size_t PrepareUtkFace(const std::filesystem::path& raw_dir,
                           const std::filesystem::path& out_root);

// In-memory images [N,3,64,64] in [-1,1] with binary labels. Immutable once
// built; safe to share across readers.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<std::string> ids, std::vector<float> pixels,
          std::vector<std::uint8_t> target, std::vector<std::uint8_t> protected_labels);

  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<std::uint8_t>& target_labels() const { return target_; }
  const std::vector<std::uint8_t>& protected_labels() const { return protected_; }
  std::span<const float> image(std::size_t i) const {
    return {pixels_.data() + i * kPixelsPerImage, kPixelsPerImage};
  }
  std::span<const float> pixels() const { return pixels_; }

  // Subset in the given order.
  Dataset Subset(std::span<const std::size_t> indices) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::vector<std::string> ids_;
  std::vector<float> pixels_;
  std::vector<std::uint8_t> target_, protected_;
};

using DatasetSplits = Splits<Dataset>;

// Center-crop, bilinear resize to 64x64, RGB, scaled to [-1,1].
Dataset LoadImages(std::span<const LabeledRecord> records);

struct LabeledImageBatch {
  Tensor images;  // [B,3,64,64]
  std::vector<std::uint8_t> target_labels;
  std::vector<std::uint8_t> protected_labels;
  std::vector<std::size_t> indices;  // rows of the source dataset

  std::size_t size() const { return indices.size(); }
};

LabeledImageBatch MakeBatch(const Dataset& dataset,
                            std::span<const std::size_t> indices);

// Index batches of one epoch. The permutation depends only on
// (seed, epoch); with drop_last every batch holds exactly batch_size rows.
std::vector<std::vector<std::size_t>> EpochBatches(std::size_t dataset_size,
                                                   std::size_t batch_size,
                                                   std::uint64_t seed,
                                                   std::uint64_t epoch,
                                                   bool drop_last);

// Single-consumer iterator over the batches of successive epochs.
class BatchStream {
 public:
  BatchStream(const Dataset& dataset, std::size_t batch_size, std::uint64_t seed,
              bool drop_last);

  // Batches of the given epoch, materialized one at a time by Next().
  void StartEpoch(std::uint64_t epoch);
  bool HasNext() const { return cursor_ < batches_.size(); }
  LabeledImageBatch Next();
  std::size_t batches_per_epoch() const { return batches_.size(); }

 private:
  const Dataset* dataset_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  bool drop_last_;
  std::vector<std::vector<std::size_t>> batches_;
  std::size_t cursor_ = 0;
};

struct SyntheticSpec {
  std::size_t train_count = 2000;
  std::size_t validation_count = 400;
  std::size_t test_count = 800;
  // Probability that target and protected labels agree on a train sample.
  double skew = 0.8;
  double noise = 0.15;  // background noise amplitude in [-1,1] units
  std::uint64_t seed = 0;

  void Validate() const;
  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

nlohmann::json ToJson(const SyntheticSpec& spec);
SyntheticSpec SyntheticSpecFromJson(const nlohmann::json& j);

// Target = shape (1 circle, 0 square); protected = dominant hue (1 warm,
// 0 cool); position and size are nuisance factors.
DatasetSplits GenerateSynthetic(const SyntheticSpec& spec);

// Writes the synthetic splits in the dataset root layout: images/*.png,
// annotations.csv (file,circle,warm) and partition.csv. Returns the number
// of images written.
std::size_t ExportSynthetic(const SyntheticSpec& spec, const std::filesystem::path& out_root);

// Renders one synthetic image into `out` (kPixelsPerImage floats).
void RenderSyntheticImage(std::uint8_t target, std::uint8_t protected_label,
                          double noise, std::uint64_t seed, std::uint64_t index,
                          std::span<float> out);

}  // namespace fdvae::data

#endif  // FDVAE_DATASETS_HPP_
