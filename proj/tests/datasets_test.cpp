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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "fdvae/datasets.hpp"
#include "fdvae/error.hpp"

namespace fdvae::data {
namespace {

namespace fs = std::filesystem;

std::vector<LabeledRecord> Pool(std::size_t per_cell, const std::string& prefix = "r") {
  std::vector<LabeledRecord> out;
  for (int t = 0; t < 2; ++t) {
    for (int p = 0; p < 2; ++p) {
      for (std::size_t i = 0; i < per_cell; ++i) {
        out.push_back({prefix + std::to_string(t) + std::to_string(p) + "-" + std::to_string(i),
                       "", std::uint8_t(t), std::uint8_t(p)});
      }
    }
  }
  return out;
}

std::map<std::pair<int, int>, std::size_t> Tally(const std::vector<LabeledRecord>& rs) {
  std::map<std::pair<int, int>, std::size_t> m;
  for (const auto& r : rs) ++m[{*r.target, *r.protected_label}];
  return m;
}

std::string ErrorCode(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

TEST(ComposeSplit, UtkEthnicityCountsAreExact) {
  const auto spec = CompositionSpec::UtkFaceEthnicity();
  const auto splits = ComposeSplit(Pool(6000), spec);
  const auto train = Tally(splits.train);
  EXPECT_EQ((train.at({1, 1})), 4000u);
  EXPECT_EQ((train.at({1, 0})), 1000u);
  EXPECT_EQ((train.at({0, 1})), 1000u);
  EXPECT_EQ((train.at({0, 0})), 4000u);
  for (const auto* split : {&splits.validation, &splits.test}) {
    for (const auto& [cell, n] : Tally(*split)) EXPECT_EQ(n, 600u);
  }
}

TEST(ComposeSplit, SmallPoolExhaustiveTally) {
  CompositionSpec spec;
  for (int t = 0; t < 2; ++t) {
    for (int p = 0; p < 2; ++p) {
      spec.Cell(SplitName::kTrain, t, p) = 5;
      spec.Cell(SplitName::kValidation, t, p) = 2;
      spec.Cell(SplitName::kTest, t, p) = 2;
    }
  }
  const auto splits = ComposeSplit(Pool(10), spec);
  for (const auto& [cell, n] : Tally(splits.train)) EXPECT_EQ(n, 5u);
  for (const auto& [cell, n] : Tally(splits.validation)) EXPECT_EQ(n, 2u);
  for (const auto& [cell, n] : Tally(splits.test)) EXPECT_EQ(n, 2u);
  std::set<std::string> ids;
  for (const auto* s : {&splits.train, &splits.validation, &splits.test}) {
    for (const auto& r : *s) EXPECT_TRUE(ids.insert(r.id).second) << r.id;
  }
  EXPECT_EQ(ids.size(), 36u);
}

TEST(ComposeSplit, ZeroCountsGiveEmptySplits) {
  const auto splits = ComposeSplit(Pool(3), CompositionSpec{});
  EXPECT_TRUE(splits.train.empty());
  EXPECT_TRUE(splits.validation.empty());
  EXPECT_TRUE(splits.test.empty());
}

TEST(ComposeSplit, InvariantToInputOrder) {
  const auto spec = CompositionSpec::UtkFaceAge(3);
  auto pool = Pool(6000);
  const auto a = ComposeSplit(pool, spec);
  std::mt19937_64 rng(1);
  std::shuffle(pool.begin(), pool.end(), rng);
  const auto b = ComposeSplit(pool, spec);
  auto ids = [](const std::vector<LabeledRecord>& rs) {
    std::vector<std::string> v;
    for (const auto& r : rs) v.push_back(r.id);
    std::sort(v.begin(), v.end());
    return v;
  };
  EXPECT_EQ(ids(a.train), ids(b.train));
  EXPECT_EQ(ids(a.validation), ids(b.validation));
  EXPECT_EQ(ids(a.test), ids(b.test));
}

TEST(ComposeSplit, Errors) {
  EXPECT_EQ(ErrorCode([] { ComposeSplit(Pool(100), CompositionSpec::UtkFaceEthnicity()); }),
            "InsufficientRecords");
  auto pool = Pool(10);
  pool[3].target.reset();
  CompositionSpec spec;
  spec.Cell(SplitName::kTrain, 0, 0) = 1;
  EXPECT_EQ(ErrorCode([&] { ComposeSplit(pool, spec); }), "MissingLabel");
}

TEST(LoadAttributeDataset, FixtureLabelsMatchGroundTruth) {
  const fs::path root = fs::path(FDVAE_FIXTURES) / "attribute12";
  const AttributePair pair{"attractive", "male"};
  const auto records = LoadAttributeDataset(root, pair, "all");
  ASSERT_EQ(records.size(), 12u);
  std::map<std::string, std::pair<int, int>> truth;
  std::ifstream in(root / "expected_attractive_male.csv");
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto a = line.find(','), b = line.rfind(',');
    truth[line.substr(0, a)] = {std::stoi(line.substr(a + 1, b - a - 1)),
                                std::stoi(line.substr(b + 1))};
  }
  for (const auto& r : records) {
    const auto& [t, p] = truth.at(r.image_path.filename().string());
    EXPECT_EQ(*r.target, t) << r.id;
    EXPECT_EQ(*r.protected_label, p) << r.id;
  }
  EXPECT_EQ(LoadAttributeDataset(root, pair, "train").size(), 6u);
  EXPECT_EQ(LoadAttributeDataset(root, pair, "test").size(), 3u);

  const Dataset images = LoadImages(records);
  ASSERT_EQ(images.size(), 12u);
  for (float v : images.pixels()) {
    ASSERT_GE(v, -1.0f);
    ASSERT_LE(v, 1.0f);
  }
}

TEST(LoadAttributeDataset, Errors) {
  const fs::path root = fs::path(FDVAE_FIXTURES) / "attribute12";
  EXPECT_EQ(ErrorCode([&] { LoadAttributeDataset(root, {"male", "male"}, "all"); }),
            "InvalidAttributePair");
  EXPECT_EQ(ErrorCode([&] { LoadAttributeDataset(root, {"smiling", "male"}, "all"); }),
            "UnknownAttribute");

  const fs::path bad = fs::temp_directory_path() / "fdvae_bad_annotations";
  fs::create_directories(bad / "images");
  std::ofstream(bad / "annotations.csv") << "file,a,b\nx.png,1,0\ny.png,1\n";
  std::ofstream(bad / "images" / "x.png") << "";
  std::ofstream(bad / "images" / "y.png") << "";
  try {
    LoadAttributeDataset(bad, {"a", "b"}, "all");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "CorruptAnnotation");
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  std::ofstream(bad / "annotations.csv") << "file,a,b\nmissing.png,1,0\n";
  EXPECT_EQ(ErrorCode([&] { LoadAttributeDataset(bad, {"a", "b"}, "all"); }),
            "MissingImageFile");
  fs::remove_all(bad);
}

TEST(GenerateSynthetic, SkewAndBalance) {
  SyntheticSpec spec;
  spec.train_count = 10000;
  spec.validation_count = 2400;
  spec.test_count = 2400;
  spec.skew = 0.8;
  const auto s = GenerateSynthetic(spec);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < s.train.size(); ++i) {
    agree += s.train.target_labels()[i] == s.train.protected_labels()[i];
  }
  const double rate = double(agree) / double(s.train.size());
  EXPECT_GE(rate, 0.78);
  EXPECT_LE(rate, 0.82);

  for (const Dataset* d : {&s.validation, &s.test}) {
    std::map<std::pair<int, int>, std::size_t> cells;
    double st = 0, sp = 0, stp = 0;
    const double n = double(d->size());
    for (std::size_t i = 0; i < d->size(); ++i) {
      const int t = d->target_labels()[i], p = d->protected_labels()[i];
      ++cells[{t, p}];
      st += t;
      sp += p;
      stp += t * p;
    }
    for (const auto& [cell, c] : cells) EXPECT_EQ(c, d->size() / 4);
    const double cov = stp / n - (st / n) * (sp / n);
    const double corr = cov / std::sqrt((st / n) * (1 - st / n) * (sp / n) * (1 - sp / n));
    EXPECT_LT(std::abs(corr), 0.05);
  }
}

TEST(GenerateSynthetic, IndependentWhenUnskewed) {
  SyntheticSpec spec;
  spec.train_count = 10000;
  spec.validation_count = 4;
  spec.test_count = 4;
  spec.skew = 0.5;
  const auto s = GenerateSynthetic(spec);
  double obs[2][2] = {};
  for (std::size_t i = 0; i < s.train.size(); ++i) {
    obs[s.train.target_labels()[i]][s.train.protected_labels()[i]] += 1;
  }
  const double n = double(s.train.size());
  double chi2 = 0;
  for (int t = 0; t < 2; ++t) {
    for (int p = 0; p < 2; ++p) {
      const double e = (obs[t][0] + obs[t][1]) * (obs[0][p] + obs[1][p]) / n;
      chi2 += (obs[t][p] - e) * (obs[t][p] - e) / e;
    }
  }
  EXPECT_LT(chi2, 6.635);  // chi-square(1) at p = 0.01
}

TEST(GenerateSynthetic, DeterministicAndAttributeDependent) {
  SyntheticSpec spec;
  spec.train_count = 40;
  spec.validation_count = 8;
  spec.test_count = 8;
  const auto a = GenerateSynthetic(spec);
  const auto b = GenerateSynthetic(spec);
  EXPECT_TRUE(a.train == b.train);
  EXPECT_TRUE(a.test == b.test);
  spec.seed = 1;
  EXPECT_FALSE(GenerateSynthetic(spec).train == a.train);

  // Warm images are red-dominant, cool ones blue-dominant.
  const std::size_t plane = kImageSize * kImageSize;
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    const auto img = a.train.image(i);
    double red = 0, blue = 0;
    for (std::size_t k = 0; k < plane; ++k) {
      red += img[k];
      blue += img[2 * plane + k];
    }
    EXPECT_EQ(red > blue, a.train.protected_labels()[i] == 1) << i;
  }
}

TEST(GenerateSynthetic, InvalidSpec) {
  SyntheticSpec spec;
  spec.skew = 1.5;
  EXPECT_EQ(ErrorCode([&] { GenerateSynthetic(spec); }), "InvalidSpec");
}

TEST(ExportSynthetic, RoundTripsThroughTheDatasetLayout) {
  SyntheticSpec spec;
  spec.train_count = 8;
  spec.validation_count = 4;
  spec.test_count = 4;
  spec.noise = 0;
  const fs::path root = fs::temp_directory_path() / "fdvae_export_synthetic";
  fs::remove_all(root);
  EXPECT_EQ(ExportSynthetic(spec, root), 16u);
  const auto generated = GenerateSynthetic(spec);
  const auto records = LoadAttributeDataset(root, {"circle", "warm"}, "test");
  ASSERT_EQ(records.size(), 4u);
  const Dataset loaded = LoadImages(records);
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    EXPECT_EQ(loaded.target_labels()[i], generated.test.target_labels()[i]);
    EXPECT_EQ(loaded.protected_labels()[i], generated.test.protected_labels()[i]);
    const auto x = loaded.image(i), y = generated.test.image(i);
    for (std::size_t k = 0; k < kPixelsPerImage; ++k) ASSERT_NEAR(x[k], y[k], 1.0 / 127.0);
  }
  fs::remove_all(root);
}

TEST(EpochBatches, Arithmetic) {
  const auto b = EpochBatches(1000, 256, 0, 0, true);
  ASSERT_EQ(b.size(), 3u);
  for (const auto& batch : b) EXPECT_EQ(batch.size(), 256u);
  const auto one = EpochBatches(256, 256, 0, 0, true);
  ASSERT_EQ(one.size(), 1u);
  std::vector<std::size_t> sorted = one[0];
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 256; ++i) EXPECT_EQ(sorted[i], i);
  const auto keep = EpochBatches(1000, 256, 0, 0, false);
  ASSERT_EQ(keep.size(), 4u);
  EXPECT_EQ(keep.back().size(), 232u);
}

TEST(EpochBatches, PerEpochPermutations) {
  const auto e0 = EpochBatches(500, 50, 9, 0, true);
  const auto e1 = EpochBatches(500, 50, 9, 1, true);
  EXPECT_NE(e0, e1);
  EXPECT_EQ(e0, EpochBatches(500, 50, 9, 0, true));
  EXPECT_EQ(e1, EpochBatches(500, 50, 9, 1, true));
  EXPECT_EQ(ErrorCode([] { EpochBatches(0, 4, 0, 0, true); }), "EmptyDataset");
}

}  // namespace
}  // namespace fdvae::data
