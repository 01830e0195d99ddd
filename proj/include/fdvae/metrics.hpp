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

// Group-fairness metrics over hard binary predictions.
//
// Group 1 holds samples with a positive protected attribute, group 0 the
// rest. Rates whose denominator is empty raise UndefinedRate instead of
// defaulting to zero.

#ifndef FDVAE_METRICS_HPP_
#define FDVAE_METRICS_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace fdvae::metrics {

struct GroupCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::uint64_t positives() const { return tp + fn; }
  std::uint64_t negatives() const { return tn + fp; }
  std::uint64_t total() const { return tp + fp + tn + fn; }
  double TruePositiveRate() const;
  double TrueNegativeRate() const;

  friend bool operator==(const GroupCounts&, const GroupCounts&) = default;
};

struct GroupConfusion {
  std::array<GroupCounts, 2> group;  // indexed by protected label

  std::uint64_t total() const { return group[0].total() + group[1].total(); }
  friend bool operator==(const GroupConfusion&, const GroupConfusion&) = default;
};

GroupConfusion ComputeGroupConfusion(std::span<const std::uint8_t> predictions,
                                     std::span<const std::uint8_t> targets,
                                     std::span<const std::uint8_t> groups);

// |TPR_0 - TPR_1|
double EqualOpportunity(const GroupConfusion& cm);
// (|TPR_0 - TPR_1| + |TNR_0 - TNR_1|) / 2
double EqualizedOdds(const GroupConfusion& cm);
// (TPR_0 + TNR_0 + TPR_1 + TNR_1) / 4; equals accuracy on a balanced set.
double EqualizedAccuracy(const GroupConfusion& cm);
double StandardAccuracy(const GroupConfusion& cm);

struct MetricReport {
  double accuracy = 0;
  double equalized_accuracy = 0;
  double equal_opportunity = 0;
  double equalized_odds = 0;

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

MetricReport Evaluate(const GroupConfusion& cm);

nlohmann::json ToJson(const MetricReport& report);
MetricReport MetricReportFromJson(const nlohmann::json& j);
std::string FormatReportHeader();
std::string FormatReportRow(const std::string& label, const MetricReport& report);

// Prediction log: CSV with header `sample_id,prediction,target,protected`.
struct PredictionRecord {
  std::string sample_id;
  std::uint8_t prediction = 0;
  std::uint8_t target = 0;
  std::uint8_t protected_label = 0;
};

std::vector<PredictionRecord> ReadPredictionLog(const std::filesystem::path& path);
void WritePredictionLog(const std::filesystem::path& path,
                        std::span<const PredictionRecord> records);
GroupConfusion ConfusionFromRecords(std::span<const PredictionRecord> records);

}  // namespace fdvae::metrics

#endif  // FDVAE_METRICS_HPP_
