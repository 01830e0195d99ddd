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

#include <filesystem>
#include <random>

#include "fdvae/error.hpp"
#include "fdvae/metrics.hpp"

namespace fdvae::metrics {
namespace {

namespace fs = std::filesystem;

GroupConfusion Fixture(const char* name) {
  const auto records = ReadPredictionLog(fs::path(FDVAE_FIXTURES) / "two_models" / name);
  return ConfusionFromRecords(records);
}

TEST(TwoModelFixture, ModelA) {
  const auto cm = Fixture("model_a.csv");
  EXPECT_EQ(cm.total(), 10000u);
  EXPECT_NEAR(StandardAccuracy(cm), 0.74, 1e-12);
  EXPECT_NEAR(EqualizedAccuracy(cm), 0.50, 1e-12);
  EXPECT_NEAR(EqualOpportunity(cm), 0.8, 1e-12);
  EXPECT_NEAR(EqualizedOdds(cm), 0.8, 1e-12);
}

TEST(TwoModelFixture, ModelB) {
  const auto cm = Fixture("model_b.csv");
  EXPECT_NEAR(StandardAccuracy(cm), 0.26, 1e-12);
  EXPECT_NEAR(EqualizedAccuracy(cm), 0.50, 1e-12);
}

TEST(Metrics, HandCountedConfusion) {
  // group 1: tp 3 fn 1 tn 2 fp 2; group 0: tp 1 fn 1 tn 4 fp 0
  const std::vector<std::uint8_t> pred = {1, 1, 1, 0, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0};
  const std::vector<std::uint8_t> tgt = {1, 1, 1, 1, 0, 0, 0, 0, 1, 1, 0, 0, 0, 0};
  const std::vector<std::uint8_t> grp = {1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0};
  const auto cm = ComputeGroupConfusion(pred, tgt, grp);
  EXPECT_EQ(cm.group[1], (GroupCounts{3, 2, 2, 1}));
  EXPECT_EQ(cm.group[0], (GroupCounts{1, 0, 4, 1}));
  EXPECT_DOUBLE_EQ(StandardAccuracy(cm), 10.0 / 14.0);
  EXPECT_DOUBLE_EQ(EqualOpportunity(cm), 0.25);              // |0.5 - 0.75|
  EXPECT_DOUBLE_EQ(EqualizedOdds(cm), (0.25 + 0.5) / 2);     // TNR 1.0 vs 0.5
  EXPECT_DOUBLE_EQ(EqualizedAccuracy(cm), (0.5 + 1.0 + 0.75 + 0.5) / 4);
}

TEST(Metrics, EqualizedAccuracyEqualsAccuracyOnBalancedSet) {
  std::mt19937_64 rng(3);
  std::bernoulli_distribution flip(0.3);
  std::vector<std::uint8_t> pred, tgt, grp;
  for (int t = 0; t < 2; ++t) {
    for (int p = 0; p < 2; ++p) {
      for (int i = 0; i < 500; ++i) {
        tgt.push_back(std::uint8_t(t));
        grp.push_back(std::uint8_t(p));
        pred.push_back(std::uint8_t(flip(rng) ? 1 - t : t));
      }
    }
  }
  const auto cm = ComputeGroupConfusion(pred, tgt, grp);
  // Equal cells make EAcc the mean of four cell accuracies, as is Acc.
  EXPECT_NEAR(EqualizedAccuracy(cm), StandardAccuracy(cm), 1e-12);
}

TEST(Metrics, EqualizedAccuracyIgnoresGroupSubsampling) {
  std::mt19937_64 rng(17);
  std::bernoulli_distribution coin(0.5), err0(0.1), err1(0.3);
  std::vector<std::uint8_t> pred, tgt, grp;
  for (int i = 0; i < 10000; ++i) {
    const std::uint8_t t = coin(rng), p = coin(rng);
    const bool wrong = p ? err1(rng) : err0(rng);
    tgt.push_back(t);
    grp.push_back(p);
    pred.push_back(std::uint8_t(wrong ? 1 - t : t));
  }
  const auto full = ComputeGroupConfusion(pred, tgt, grp);
  std::vector<std::uint8_t> p2, t2, g2;
  std::bernoulli_distribution keep(0.5);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (grp[i] == 1 && !keep(rng)) continue;
    p2.push_back(pred[i]);
    t2.push_back(tgt[i]);
    g2.push_back(grp[i]);
  }
  const auto sub = ComputeGroupConfusion(p2, t2, g2);
  EXPECT_LT(std::abs(EqualizedAccuracy(full) - EqualizedAccuracy(sub)), 0.02);
  EXPECT_GT(StandardAccuracy(sub) - StandardAccuracy(full), 0.02);
}

TEST(Metrics, UndefinedRateIsAnError) {
  const std::vector<std::uint8_t> pred = {1, 0, 1}, tgt = {1, 1, 0}, grp = {1, 1, 0};
  const auto cm = ComputeGroupConfusion(pred, tgt, grp);
  try {
    EqualOpportunity(cm);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "UndefinedRate");
  }
}

TEST(Metrics, InputValidation) {
  const std::vector<std::uint8_t> a = {1, 0}, b = {1}, c = {2, 0};
  EXPECT_THROW(ComputeGroupConfusion(a, b, a), Error);
  EXPECT_THROW(ComputeGroupConfusion(c, a, a), Error);
}

TEST(PredictionLog, RoundTrip) {
  const fs::path path = fs::temp_directory_path() / "fdvae_predictions_roundtrip.csv";
  const std::vector<PredictionRecord> records = {{"a", 1, 0, 1}, {"b", 0, 0, 0}, {"c", 1, 1, 1}};
  WritePredictionLog(path, records);
  const auto back = ReadPredictionLog(path);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].sample_id, records[i].sample_id);
    EXPECT_EQ(back[i].prediction, records[i].prediction);
    EXPECT_EQ(back[i].target, records[i].target);
    EXPECT_EQ(back[i].protected_label, records[i].protected_label);
  }
  fs::remove(path);
}

TEST(MetricReport, JsonRoundTrip) {
  const MetricReport r{0.74, 0.5, 0.8, 0.8};
  EXPECT_EQ(MetricReportFromJson(ToJson(r)), r);
}

}  // namespace
}  // namespace fdvae::metrics
