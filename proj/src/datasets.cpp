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

#include "fdvae/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "fdvae/digest.hpp"
#include "fdvae/error.hpp"
#include "fdvae/random.hpp"

namespace fdvae::data {

namespace fs = std::filesystem;

void AttributePair::Validate() const {
  if (target_name.empty() || protected_name.empty()) {
    throw ConfigError("InvalidAttributePair", "attribute names must be non-empty");
  }
  if (target_name == protected_name) {
    throw ConfigError("InvalidAttributePair",
                      "target and protected attribute are both '" + target_name + "'");
  }
  if (target_positive > 1 || protected_positive > 1) {
    throw ConfigError("InvalidAttributePair", "polarity must be 0 or 1");
  }
}

std::vector<AttributePair> CelebAPairs() {
  return {{"Attractive", "Male"},
          {"Wavy_Hair", "Male"},
          {"Attractive", "Young"},
          {"Big_Nose", "Young"}};
}

// Composition ---------------------------------------------------------------

std::size_t CompositionSpec::SplitTotal(SplitName split) const {
  std::size_t n = 0;
  for (int t = 0; t < 2; ++t) {
    for (int p = 0; p < 2; ++p) n += Cell(split, t, p);
  }
  return n;
}

void CompositionSpec::Validate() const {
  for (SplitName split : {SplitName::kValidation, SplitName::kTest}) {
    const std::size_t first = Cell(split, 0, 0);
    for (int t = 0; t < 2; ++t) {
      for (int p = 0; p < 2; ++p) {
        if (Cell(split, t, p) != first) {
          throw ConfigError("UnbalancedEvalSplit",
                            std::string(kSplitNames[static_cast<int>(split)]) +
                                " cells must all be equal");
        }
      }
    }
  }
}

namespace {

CompositionSpec UtkSpec(std::size_t agree, std::size_t disagree, std::uint64_t seed) {
  CompositionSpec spec;
  spec.seed = seed;
  spec.Cell(SplitName::kTrain, 1, 1) = agree;
  spec.Cell(SplitName::kTrain, 0, 0) = agree;
  spec.Cell(SplitName::kTrain, 1, 0) = disagree;
  spec.Cell(SplitName::kTrain, 0, 1) = disagree;
  for (SplitName split : {SplitName::kValidation, SplitName::kTest}) {
    for (int t = 0; t < 2; ++t) {
      for (int p = 0; p < 2; ++p) spec.Cell(split, t, p) = 600;
    }
  }
  return spec;
}

}  // namespace

// Ethnicity: Caucasians (E=1) are mostly male (G=1).
CompositionSpec CompositionSpec::UtkFaceEthnicity(std::uint64_t seed) {
  return UtkSpec(4000, 1000, seed);
}

// Age: the young (A=1) are mostly female (G=0).
CompositionSpec CompositionSpec::UtkFaceAge(std::uint64_t seed) {
  return UtkSpec(1000, 4000, seed);
}

nlohmann::json ToJson(const CompositionSpec& spec) {
  nlohmann::json j;
  for (int s = 0; s < 3; ++s) {
    nlohmann::json cells;
    for (int t = 0; t < 2; ++t) {
      for (int p = 0; p < 2; ++p) {
        cells["t" + std::to_string(t) + "_p" + std::to_string(p)] = spec.counts[s][t][p];
      }
    }
    j[kSplitNames[s]] = cells;
  }
  j["seed"] = spec.seed;
  return j;
}

CompositionSpec CompositionSpecFromJson(const nlohmann::json& j) {
  CompositionSpec spec;
  for (int s = 0; s < 3; ++s) {
    const auto& cells = j.at(kSplitNames[s]);
    for (int t = 0; t < 2; ++t) {
      for (int p = 0; p < 2; ++p) {
        spec.counts[s][t][p] =
            cells.at("t" + std::to_string(t) + "_p" + std::to_string(p)).get<std::size_t>();
      }
    }
  }
  spec.seed = j.value("seed", std::uint64_t{0});
  return spec;
}

RecordSplits ComposeSplit(std::span<const LabeledRecord> records,
                          const CompositionSpec& spec) {
  spec.Validate();
  struct Ranked {
    std::uint64_t key;
    const LabeledRecord* record;
  };
  std::array<std::array<std::vector<Ranked>, 2>, 2> cells;
  std::unordered_set<std::string> seen;
  for (const auto& r : records) {
    if (!r.target || !r.protected_label || *r.target > 1 || *r.protected_label > 1) {
      throw DataError("MissingLabel", "record '" + r.id + "' lacks a binary label");
    }
    if (!seen.insert(r.id).second) {
      throw DataError("DuplicateRecord", "record id '" + r.id + "' appears twice");
    }
    Fnv1a hash;
    hash.Update(&spec.seed, sizeof(spec.seed));
    hash.Update(r.id);
    cells[*r.target][*r.protected_label].push_back({hash.value(), &r});
  }

  RecordSplits out;
  std::array<std::vector<Ranked>, 3> picked;
  for (int t = 0; t < 2; ++t) {
    for (int p = 0; p < 2; ++p) {
      auto& cell = cells[t][p];
      std::size_t need = 0;
      for (int s = 0; s < 3; ++s) need += spec.counts[s][t][p];
      if (cell.size() < need) {
        throw DataError("InsufficientRecords",
                        "cell (target=" + std::to_string(t) + ", protected=" +
                            std::to_string(p) + ") needs " + std::to_string(need) +
                            " records, has " + std::to_string(cell.size()));
      }
      std::sort(cell.begin(), cell.end(), [](const Ranked& a, const Ranked& b) {
        return a.key != b.key ? a.key < b.key : a.record->id < b.record->id;
      });
      std::size_t cursor = 0;
      for (int s = 0; s < 3; ++s) {
        for (std::size_t i = 0; i < spec.counts[s][t][p]; ++i) {
          picked[s].push_back(cell[cursor++]);
        }
      }
    }
  }
  std::array<std::vector<LabeledRecord>*, 3> dst = {&out.train, &out.validation, &out.test};
  for (int s = 0; s < 3; ++s) {
    std::sort(picked[s].begin(), picked[s].end(), [](const Ranked& a, const Ranked& b) {
      return a.key != b.key ? a.key < b.key : a.record->id < b.record->id;
    });
    for (const auto& r : picked[s]) dst[s]->push_back(*r.record);
  }
  return out;
}

// Annotation ingestion -------------------------------------------------------

namespace {

std::vector<std::string> SplitCsvLine(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::uint8_t ParseBinary(const std::string& field, const fs::path& file,
                         std::size_t line_no) {
  if (field == "0") return 0;
  if (field == "1") return 1;
  throw DataError("CorruptAnnotation", file.string() + " line " +
                                           std::to_string(line_no) +
                                           ": expected 0 or 1, got '" + field + "'");
}

std::unordered_map<std::string, std::string> ReadPartition(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("MissingPartition", "cannot open " + path.string());
  std::unordered_map<std::string, std::string> split_of;
  std::string line;
  std::getline(in, line);  // header
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = SplitCsvLine(line);
    if (fields.empty() || (fields.size() == 1 && fields[0].empty())) continue;
    if (fields.size() != 2) {
      throw DataError("CorruptAnnotation",
                      path.string() + " line " + std::to_string(line_no) +
                          ": expected `file,split`");
    }
    split_of[fields[0]] = fields[1];
  }
  return split_of;
}

}  // namespace

std::vector<LabeledRecord> LoadAttributeDataset(const fs::path& root,
                                                const AttributePair& pair,
                                                const std::string& split) {
  pair.Validate();
  if (split != "all" && split != "train" && split != "val" && split != "test") {
    throw ConfigError("UnknownSplit", "split must be train, val, test or all");
  }
  const fs::path annotations = root / "annotations.csv";
  std::ifstream in(annotations);
  if (!in) throw DataError("MissingAnnotation", "cannot open " + annotations.string());

  std::string line;
  if (!std::getline(in, line)) {
    throw DataError("CorruptAnnotation", annotations.string() + " line 1: empty file");
  }
  const auto header = SplitCsvLine(line);
  if (header.empty() || header[0] != "file") {
    throw DataError("CorruptAnnotation",
                    annotations.string() + " line 1: header must start with `file`");
  }
  auto column = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end() || it == header.begin()) {
      throw DataError("UnknownAttribute", "attribute '" + name + "' not in " +
                                              annotations.string());
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t target_col = column(pair.target_name);
  const std::size_t protected_col = column(pair.protected_name);

  std::unordered_map<std::string, std::string> split_of;
  if (split != "all") split_of = ReadPartition(root / "partition.csv");

  std::vector<LabeledRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = SplitCsvLine(line);
    if (fields.empty() || (fields.size() == 1 && fields[0].empty())) continue;
    if (fields.size() != header.size()) {
      throw DataError("CorruptAnnotation",
                      annotations.string() + " line " + std::to_string(line_no) +
                          ": expected " + std::to_string(header.size()) +
                          " fields, got " + std::to_string(fields.size()));
    }
    const std::uint8_t raw_t = ParseBinary(fields[target_col], annotations, line_no);
    const std::uint8_t raw_p = ParseBinary(fields[protected_col], annotations, line_no);
    if (split != "all") {
      auto it = split_of.find(fields[0]);
      if (it == split_of.end()) {
        throw DataError("CorruptAnnotation",
                        annotations.string() + " line " + std::to_string(line_no) +
                            ": file missing from partition.csv");
      }
      if (it->second != split) continue;
    }
    LabeledRecord record;
    record.id = fields[0];
    record.image_path = root / "images" / fields[0];
    if (!fs::exists(record.image_path)) {
      throw DataError("MissingImageFile", record.image_path.string());
    }
    record.target = static_cast<std::uint8_t>(raw_t == pair.target_positive);
    record.protected_label = static_cast<std::uint8_t>(raw_p == pair.protected_positive);
    records.push_back(std::move(record));
  }
  return records;
}

std::size_t PrepareUtkFace(const fs::path& raw_dir, const fs::path& out_root) {
  if (!fs::is_directory(raw_dir)) {
    throw DataError("MissingDirectory", raw_dir.string() + " is not a directory");
  }
  const std::regex pattern(R"(^(\d+)_([01])_([0-4])_[^/]*\.(jpg|jpeg|png)$)",
                           std::regex::icase);
  std::vector<std::pair<std::string, std::string>> rows;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(raw_dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  fs::create_directories(out_root / "images");
  std::ofstream out(out_root / "annotations.csv");
  if (!out) throw DataError("UnwritableFile", (out_root / "annotations.csv").string());
  out << "file,male,young,caucasian\n";
  std::size_t written = 0;
  for (const auto& path : files) {
    std::smatch m;
    const std::string name = path.filename().string();
    if (!std::regex_match(name, m, pattern)) continue;
    const int age = std::stoi(m[1].str());
    const int gender = std::stoi(m[2].str());  // 0 male, 1 female
    const int race = std::stoi(m[3].str());    // 0 white
    fs::copy_file(path, out_root / "images" / name, fs::copy_options::overwrite_existing);
    out << name << ',' << (gender == 0) << ',' << (age <= 35) << ',' << (race == 0) << '\n';
    ++written;
  }
  return written;
}

// In-memory datasets ---------------------------------------------------------

Dataset::Dataset(std::vector<std::string> ids, std::vector<float> pixels,
                 std::vector<std::uint8_t> target,
                 std::vector<std::uint8_t> protected_labels)
    : ids_(std::move(ids)),
      pixels_(std::move(pixels)),
      target_(std::move(target)),
      protected_(std::move(protected_labels)) {
  const std::size_t n = ids_.size();
  if (pixels_.size() != n * kPixelsPerImage || target_.size() != n ||
      protected_.size() != n) {
    throw DataError("ShapeMismatch", "dataset columns disagree on length");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (target_[i] > 1 || protected_[i] > 1) {
      throw DataError("LabelOutOfRange", "non-binary label for " + ids_[i]);
    }
  }
}

Dataset Dataset::Subset(std::span<const std::size_t> indices) const {
  std::vector<std::string> ids;
  std::vector<float> pixels;
  std::vector<std::uint8_t> t, p;
  pixels.reserve(indices.size() * kPixelsPerImage);
  for (std::size_t i : indices) {
    ids.push_back(ids_.at(i));
    auto img = image(i);
    pixels.insert(pixels.end(), img.begin(), img.end());
    t.push_back(target_[i]);
    p.push_back(protected_[i]);
  }
  return Dataset(std::move(ids), std::move(pixels), std::move(t), std::move(p));
}

Dataset LoadImages(std::span<const LabeledRecord> records) {
  std::vector<std::string> ids;
  std::vector<float> pixels;
  std::vector<std::uint8_t> t, p;
  pixels.reserve(records.size() * kPixelsPerImage);
  for (const auto& r : records) {
    if (!r.target || !r.protected_label) {
      throw DataError("MissingLabel", "record '" + r.id + "' lacks a label");
    }
    cv::Mat bgr = cv::imread(r.image_path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw DataError("MissingImageFile", r.image_path.string());
    const int side = std::min(bgr.rows, bgr.cols);
    cv::Mat crop = bgr(cv::Rect((bgr.cols - side) / 2, (bgr.rows - side) / 2, side, side));
    cv::Mat resized;
    cv::resize(crop, resized, cv::Size(kImageSize, kImageSize), 0, 0, cv::INTER_LINEAR);
    const std::size_t base = pixels.size();
    pixels.resize(base + kPixelsPerImage);
    for (std::size_t y = 0; y < kImageSize; ++y) {
      const auto* row = resized.ptr<cv::Vec3b>(static_cast<int>(y));
      for (std::size_t x = 0; x < kImageSize; ++x) {
        for (std::size_t c = 0; c < 3; ++c) {
          // BGR -> RGB planes
          const float v = row[x][2 - c];
          pixels[base + (c * kImageSize + y) * kImageSize + x] = v / 127.5f - 1.0f;
        }
      }
    }
    ids.push_back(r.id);
    t.push_back(*r.target);
    p.push_back(*r.protected_label);
  }
  return Dataset(std::move(ids), std::move(pixels), std::move(t), std::move(p));
}

// Batching -------------------------------------------------------------------

LabeledImageBatch MakeBatch(const Dataset& dataset,
                            std::span<const std::size_t> indices) {
  LabeledImageBatch batch;
  batch.images = Tensor({indices.size(), 3, kImageSize, kImageSize});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto img = dataset.image(indices[i]);
    std::copy(img.begin(), img.end(), batch.images.data() + i * kPixelsPerImage);
    batch.target_labels.push_back(dataset.target_labels()[indices[i]]);
    batch.protected_labels.push_back(dataset.protected_labels()[indices[i]]);
  }
  batch.indices.assign(indices.begin(), indices.end());
  return batch;
}

std::vector<std::vector<std::size_t>> EpochBatches(std::size_t dataset_size,
                                                   std::size_t batch_size,
                                                   std::uint64_t seed,
                                                   std::uint64_t epoch,
                                                   bool drop_last) {
  if (batch_size == 0) throw ConfigError("InvalidBatchSize", "batch_size must be >= 1");
  if (dataset_size == 0) throw DataError("EmptyDataset", "cannot batch an empty dataset");
  RandomEngine rng = MakeEngine(seed, Stream::kBatchOrder, epoch);
  const auto perm = RandomPermutation(dataset_size, rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < dataset_size; start += batch_size) {
    const std::size_t end = std::min(dataset_size, start + batch_size);
    if (drop_last && end - start < batch_size) break;
    batches.emplace_back(perm.begin() + start, perm.begin() + end);
  }
  return batches;
}

BatchStream::BatchStream(const Dataset& dataset, std::size_t batch_size,
                         std::uint64_t seed, bool drop_last)
    : dataset_(&dataset), batch_size_(batch_size), seed_(seed), drop_last_(drop_last) {
  if (batch_size == 0) throw ConfigError("InvalidBatchSize", "batch_size must be >= 1");
  if (dataset.empty()) throw DataError("EmptyDataset", "cannot batch an empty dataset");
}

void BatchStream::StartEpoch(std::uint64_t epoch) {
  batches_ = EpochBatches(dataset_->size(), batch_size_, seed_, epoch, drop_last_);
  cursor_ = 0;
}

LabeledImageBatch BatchStream::Next() {
  if (!HasNext()) throw DataError("DataExhausted", "no batches left in this epoch");
  return MakeBatch(*dataset_, batches_[cursor_++]);
}

// Synthetic data -------------------------------------------------------------

void SyntheticSpec::Validate() const {
  if (!(skew >= 0.0 && skew <= 1.0)) {
    throw ConfigError("InvalidSpec", "skew must lie in [0,1]");
  }
  if (!(noise >= 0.0 && noise <= 1.0)) {
    throw ConfigError("InvalidSpec", "noise must lie in [0,1]");
  }
  if (validation_count % 4 || test_count % 4) {
    throw ConfigError("InvalidSpec",
                      "validation and test counts must be multiples of 4 (balanced cells)");
  }
}

nlohmann::json ToJson(const SyntheticSpec& s) {
  return {{"train_count", s.train_count}, {"validation_count", s.validation_count},
          {"test_count", s.test_count},   {"skew", s.skew},
          {"noise", s.noise},             {"seed", s.seed}};
}

SyntheticSpec SyntheticSpecFromJson(const nlohmann::json& j) {
  SyntheticSpec s;
  s.train_count = j.at("train_count").get<std::size_t>();
  s.validation_count = j.at("validation_count").get<std::size_t>();
  s.test_count = j.at("test_count").get<std::size_t>();
  s.skew = j.at("skew").get<double>();
  s.noise = j.at("noise").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

namespace {

void HsvToRgb(double h, double s, double v, double rgb[3]) {
  const double c = v * s;
  const double hp = std::fmod(h, 360.0) / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) r = c, g = x;
  else if (hp < 2) r = x, g = c;
  else if (hp < 3) g = c, b = x;
  else if (hp < 4) g = x, b = c;
  else if (hp < 5) r = x, b = c;
  else r = c, b = x;
  const double m = v - c;
  rgb[0] = r + m;
  rgb[1] = g + m;
  rgb[2] = b + m;
}

}  // namespace

void RenderSyntheticImage(std::uint8_t target, std::uint8_t protected_label,
                          double noise, std::uint64_t seed, std::uint64_t index,
                          std::span<float> out) {
  RandomEngine rng = MakeEngine(seed, Stream::kSynthetic, index);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double hue = protected_label ? 0.0 + 40.0 * unit(rng)     // warm
                                     : 190.0 + 50.0 * unit(rng);  // cool
  double rgb[3];
  HsvToRgb(hue, 0.85, 0.95, rgb);
  const double radius = 12.0 + 4.0 * unit(rng);
  const double cx = 32.0 + 16.0 * (unit(rng) - 0.5);
  const double cy = 32.0 + 16.0 * (unit(rng) - 0.5);
  const double half_side = radius;
  constexpr double kBackground = -0.6;

  for (std::size_t y = 0; y < kImageSize; ++y) {
    for (std::size_t x = 0; x < kImageSize; ++x) {
      const double dx = double(x) + 0.5 - cx;
      const double dy = double(y) + 0.5 - cy;
      const bool inside = target ? dx * dx + dy * dy <= radius * radius
                                 : std::abs(dx) <= half_side && std::abs(dy) <= half_side;
      for (std::size_t c = 0; c < 3; ++c) {
        double v = inside ? 2.0 * rgb[c] - 1.0 : kBackground;
        v += noise * (2.0 * unit(rng) - 1.0);
        out[(c * kImageSize + y) * kImageSize + x] =
            static_cast<float>(std::clamp(v, -1.0, 1.0));
      }
    }
  }
}

namespace {

Dataset RenderSplit(const std::vector<std::pair<std::uint8_t, std::uint8_t>>& labels,
                    const SyntheticSpec& spec, const char* name, std::uint64_t split_id) {
  std::vector<std::string> ids;
  std::vector<float> pixels(labels.size() * kPixelsPerImage);
  std::vector<std::uint8_t> t, p;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    char id[64];
    std::snprintf(id, sizeof(id), "syn-%s-%06zu", name, i);
    ids.emplace_back(id);
    t.push_back(labels[i].first);
    p.push_back(labels[i].second);
    RenderSyntheticImage(labels[i].first, labels[i].second, spec.noise, spec.seed,
                         (split_id << 32) | i,
                         std::span<float>(pixels.data() + i * kPixelsPerImage,
                                          kPixelsPerImage));
  }
  return Dataset(std::move(ids), std::move(pixels), std::move(t), std::move(p));
}

std::vector<std::pair<std::uint8_t, std::uint8_t>> CellLabels(
    const std::array<std::array<std::size_t, 2>, 2>& counts, RandomEngine& rng) {
  std::vector<std::pair<std::uint8_t, std::uint8_t>> labels;
  for (std::uint8_t t = 0; t < 2; ++t) {
    for (std::uint8_t p = 0; p < 2; ++p) {
      labels.insert(labels.end(), counts[t][p], {t, p});
    }
  }
  const auto perm = RandomPermutation(labels.size(), rng);
  std::vector<std::pair<std::uint8_t, std::uint8_t>> shuffled;
  for (std::size_t i : perm) shuffled.push_back(labels[i]);
  return shuffled;
}

}  // namespace

DatasetSplits GenerateSynthetic(const SyntheticSpec& spec) {
  spec.Validate();
  RandomEngine rng = MakeEngine(spec.seed, Stream::kSynthetic, ~std::uint64_t{0});

  const std::size_t n = spec.train_count;
  const auto agree = static_cast<std::size_t>(std::llround(spec.skew * double(n)));
  const std::size_t disagree = n - agree;
  std::array<std::array<std::size_t, 2>, 2> train{};
  train[1][1] = (agree + 1) / 2;
  train[0][0] = agree / 2;
  train[1][0] = (disagree + 1) / 2;
  train[0][1] = disagree / 2;

  auto balanced = [](std::size_t count) {
    std::array<std::array<std::size_t, 2>, 2> cells{};
    for (auto& row : cells) row.fill(count / 4);
    return cells;
  };

  DatasetSplits splits;
  splits.train = RenderSplit(CellLabels(train, rng), spec, "train", 0);
  splits.validation =
      RenderSplit(CellLabels(balanced(spec.validation_count), rng), spec, "val", 1);
  splits.test = RenderSplit(CellLabels(balanced(spec.test_count), rng), spec, "test", 2);
  return splits;
}

std::size_t ExportSynthetic(const SyntheticSpec& spec, const fs::path& out_root) {
  const DatasetSplits splits = GenerateSynthetic(spec);
  fs::create_directories(out_root / "images");
  std::ofstream annotations(out_root / "annotations.csv");
  std::ofstream partition(out_root / "partition.csv");
  if (!annotations || !partition) {
    throw DataError("UnwritableFile", "cannot write under " + out_root.string());
  }
  annotations << "file,circle,warm\n";
  partition << "file,split\n";
  std::size_t written = 0;
  const std::pair<const Dataset*, const char*> parts[] = {
      {&splits.train, "train"}, {&splits.validation, "val"}, {&splits.test, "test"}};
  for (const auto& [dataset, split] : parts) {
    for (std::size_t i = 0; i < dataset->size(); ++i) {
      const auto pixels = dataset->image(i);
      const int side = static_cast<int>(kImageSize);
      cv::Mat bgr(side, side, CV_8UC3);
      for (std::size_t y = 0; y < kImageSize; ++y) {
        for (std::size_t x = 0; x < kImageSize; ++x) {
          for (std::size_t c = 0; c < 3; ++c) {
            const float v = pixels[(c * kImageSize + y) * kImageSize + x];
            bgr.at<cv::Vec3b>(int(y), int(x))[int(2 - c)] =
                cv::saturate_cast<std::uint8_t>(std::lround((v + 1.0f) * 127.5f));
          }
        }
      }
      const std::string file = dataset->ids()[i] + ".png";
      if (!cv::imwrite((out_root / "images" / file).string(), bgr)) {
        throw DataError("UnwritableFile", (out_root / "images" / file).string());
      }
      annotations << file << ',' << int(dataset->target_labels()[i]) << ','
                  << int(dataset->protected_labels()[i]) << '\n';
      partition << file << ',' << split << '\n';
      ++written;
    }
  }
  return written;
}

}  // namespace fdvae::data
