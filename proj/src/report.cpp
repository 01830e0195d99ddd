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

#include "fdvae/report.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "fdvae/error.hpp"

namespace fdvae::report {

using nlohmann::json;

namespace {

std::vector<json> ReadJsonLines(const std::filesystem::path& path) {
  std::vector<json> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

plot::Series& SeriesNamed(plot::Chart& chart, const std::string& name) {
  for (auto& s : chart.series) {
    if (s.name == name) return s;
  }
  chart.series.push_back({name, {}, {}});
  return chart.series.back();
}

void WriteText(const std::filesystem::path& path, const std::string& text,
               std::vector<std::filesystem::path>& files) {
  std::ofstream(path) << text;
  files.push_back(path);
}

}  // namespace

exp::ResultRow LoadResultRow(const std::filesystem::path& run_dir) {
  const auto path = run_dir / "metrics.json";
  std::ifstream in(path);
  if (!in) throw DataError("MissingMetricsFile", "no metrics file at " + path.string());
  try {
    return exp::ResultRowFromJson(json::parse(in));
  } catch (const json::exception& e) {
    throw DataError("MissingMetricsFile", path.string() + ": " + e.what());
  }
}

plot::Chart LossChart(const std::filesystem::path& run_dir) {
  plot::Chart chart{"representation losses", "step", "loss", {}};
  for (const json& r : ReadJsonLines(run_dir / "logs" / "repr_steps.jsonl")) {
    const double step = r.at("step").get<double>();
    for (const auto& [key, value] : r.items()) {
      if (key == "epoch" || key == "step") continue;
      auto& s = SeriesNamed(chart, key);
      s.x.push_back(step);
      s.y.push_back(value.get<double>());
    }
  }
  return chart;
}

plot::Chart FairnessChart(const std::filesystem::path& run_dir) {
  plot::Chart chart{"validation metrics", "epoch", "value", {}};
  for (const json& r : ReadJsonLines(run_dir / "logs" / "downstream_epochs.jsonl")) {
    const double epoch = r.at("epoch").get<double>();
    for (const auto& [key, value] : r.at("validation").items()) {
      if (!value.is_number()) continue;
      auto& s = SeriesNamed(chart, key);
      s.x.push_back(epoch);
      s.y.push_back(value.get<double>());
    }
  }
  return chart;
}

plot::Chart ProjectionChart(const std::filesystem::path& run_dir) {
  plot::Chart chart{"embedding projection", "pc1", "pc2", {}};
  std::ifstream in(run_dir / "embeddings" / "projection.csv");
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string id, subspace, pc1, pc2;
    std::getline(fields, id, ',');
    std::getline(fields, subspace, ',');
    std::getline(fields, pc1, ',');
    std::getline(fields, pc2, ',');
    auto& s = SeriesNamed(chart, subspace);
    s.x.push_back(std::stod(pc1));
    s.y.push_back(std::stod(pc2));
  }
  return chart;
}

Report WriteReport(const std::vector<std::filesystem::path>& run_dirs,
                   const std::filesystem::path& out_dir) {
  std::vector<exp::ResultRow> rows;
  for (const auto& dir : run_dirs) rows.push_back(LoadResultRow(dir));
  Report report{exp::MakeResultsTable(rows), {}};

  std::filesystem::create_directories(out_dir);
  WriteText(out_dir / "results.txt", report.table.Format(), report.files);
  WriteText(out_dir / "results.json", report.table.ToJson().dump(2) + "\n", report.files);
  WriteText(out_dir / "results.csv", report.table.ToCsv(), report.files);

  for (const auto& dir : run_dirs) {
    const std::string name = dir.filename().empty() ? dir.parent_path().filename().string()
                                                    : dir.filename().string();
    if (auto c = LossChart(dir); !c.series.empty()) {
      report.files.push_back(plot::WriteLineChart(c, out_dir / (name + "_losses")));
    }
    if (auto c = FairnessChart(dir); !c.series.empty()) {
      report.files.push_back(plot::WriteLineChart(c, out_dir / (name + "_fairness")));
    }
    if (auto c = ProjectionChart(dir); !c.series.empty()) {
      report.files.push_back(plot::WriteScatterChart(c, out_dir / (name + "_projection")));
    }
  }
  return report;
}

}  // namespace fdvae::report
