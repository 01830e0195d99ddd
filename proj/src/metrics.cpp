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

#include "fdvae/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fdvae/error.hpp"

namespace fdvae::metrics {

double GroupCounts::TruePositiveRate() const {
  if (positives() == 0) {
    throw DataError("UndefinedRate", "group has no positive-target samples");
  }
  return double(tp) / double(positives());
}

double GroupCounts::TrueNegativeRate() const {
  if (negatives() == 0) {
    throw DataError("UndefinedRate", "group has no negative-target samples");
  }
  return double(tn) / double(negatives());
}

GroupConfusion ComputeGroupConfusion(std::span<const std::uint8_t> predictions,
                                     std::span<const std::uint8_t> targets,
                                     std::span<const std::uint8_t> groups) {
  const std::size_t n = predictions.size();
  if (n == 0 || targets.size() != n || groups.size() != n) {
    throw DataError("LengthMismatch",
                    "predictions/targets/groups have lengths " +
                        std::to_string(n) + "/" + std::to_string(targets.size()) +
                        "/" + std::to_string(groups.size()) +
                        " (must be equal and non-zero)");
  }
  GroupConfusion cm;
  for (std::size_t i = 0; i < n; ++i) {
    if (predictions[i] > 1 || targets[i] > 1 || groups[i] > 1) {
      throw DataError("NonBinaryValue", "non-binary value at index " +
                                            std::to_string(i));
    }
    GroupCounts& g = cm.group[groups[i]];
    if (targets[i]) {
      (predictions[i] ? g.tp : g.fn)++;
    } else {
      (predictions[i] ? g.fp : g.tn)++;
    }
  }
  return cm;
}

double EqualOpportunity(const GroupConfusion& cm) {
  return std::abs(cm.group[0].TruePositiveRate() - cm.group[1].TruePositiveRate());
}

double EqualizedOdds(const GroupConfusion& cm) {
  const double tpr_gap =
      std::abs(cm.group[0].TruePositiveRate() - cm.group[1].TruePositiveRate());
  const double tnr_gap =
      std::abs(cm.group[0].TrueNegativeRate() - cm.group[1].TrueNegativeRate());
  return 0.5 * (tpr_gap + tnr_gap);
}

double EqualizedAccuracy(const GroupConfusion& cm) {
  return 0.25 * (cm.group[0].TruePositiveRate() + cm.group[0].TrueNegativeRate() +
                 cm.group[1].TruePositiveRate() + cm.group[1].TrueNegativeRate());
}

double StandardAccuracy(const GroupConfusion& cm) {
  const std::uint64_t n = cm.total();
  if (n == 0) throw DataError("LengthMismatch", "no samples");
  const std::uint64_t correct =
      cm.group[0].tp + cm.group[0].tn + cm.group[1].tp + cm.group[1].tn;
  return double(correct) / double(n);
}

MetricReport Evaluate(const GroupConfusion& cm) {
  return {StandardAccuracy(cm), EqualizedAccuracy(cm), EqualOpportunity(cm),
          EqualizedOdds(cm)};
}

nlohmann::json ToJson(const MetricReport& r) {
  return {{"accuracy", r.accuracy},
          {"equalized_accuracy", r.equalized_accuracy},
          {"equal_opportunity", r.equal_opportunity},
          {"equalized_odds", r.equalized_odds}};
}

MetricReport MetricReportFromJson(const nlohmann::json& j) {
  return {j.at("accuracy").get<double>(), j.at("equalized_accuracy").get<double>(),
          j.at("equal_opportunity").get<double>(), j.at("equalized_odds").get<double>()};
}

std::string FormatReportHeader() {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-28s %8s %8s %8s %8s", "model", "Acc", "EAcc",
                "EOpp", "EOdds");
  return buf;
}

std::string FormatReportRow(const std::string& label, const MetricReport& r) {
  char buf[200];
  std::snprintf(buf, sizeof(buf), "%-28s %8.4f %8.4f %8.4f %8.4f", label.c_str(),
                r.accuracy, r.equalized_accuracy, r.equal_opportunity,
                r.equalized_odds);
  return buf;
}

namespace {

std::uint8_t ParseBit(const std::string& field, std::size_t line) {
  if (field == "0") return 0;
  if (field == "1") return 1;
  throw DataError("NonBinaryValue", "prediction log line " + std::to_string(line) +
                                        ": expected 0/1, got '" + field + "'");
}

}  // namespace

std::vector<PredictionRecord> ReadPredictionLog(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("MissingFile", "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("sample_id,prediction,target,protected", 0) != 0) {
    throw DataError("CorruptPredictionLog", path.string() + ": bad header");
  }
  std::vector<PredictionRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 4) {
      throw DataError("CorruptPredictionLog",
                      path.string() + " line " + std::to_string(line_no) +
                          ": expected 4 fields");
    }
    records.push_back({fields[0], ParseBit(fields[1], line_no),
                       ParseBit(fields[2], line_no), ParseBit(fields[3], line_no)});
  }
  return records;
}

void WritePredictionLog(const std::filesystem::path& path,
                        std::span<const PredictionRecord> records) {
  std::ofstream out(path);
  if (!out) throw DataError("UnwritableFile", "cannot write " + path.string());
  out << "sample_id,prediction,target,protected\n";
  for (const auto& r : records) {
    out << r.sample_id << ',' << int(r.prediction) << ',' << int(r.target) << ','
        << int(r.protected_label) << '\n';
  }
}

GroupConfusion ConfusionFromRecords(std::span<const PredictionRecord> records) {
  std::vector<std::uint8_t> pred, target, group;
  for (const auto& r : records) {
    pred.push_back(r.prediction);
    target.push_back(r.target);
    group.push_back(r.protected_label);
  }
  return ComputeGroupConfusion(pred, target, group);
}

}  // namespace fdvae::metrics
