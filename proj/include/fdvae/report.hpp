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

// Results tables and plots assembled from finished run directories.

#ifndef FDVAE_REPORT_HPP_
#define FDVAE_REPORT_HPP_

#include <filesystem>
#include <vector>

#include "fdvae/experiments.hpp"
#include "fdvae/plot.hpp"

namespace fdvae::report {

// Reads <run_dir>/metrics.json. Throws DataError MissingMetricsFile.
exp::ResultRow LoadResultRow(const std::filesystem::path& run_dir);

// Loss components against the global step, one series per component present
// in logs/repr_steps.jsonl plus "total".
plot::Chart LossChart(const std::filesystem::path& run_dir);

// Validation fairness metrics against the downstream epoch.
plot::Chart FairnessChart(const std::filesystem::path& run_dir);

// embeddings/projection.csv, one series per subspace.
plot::Chart ProjectionChart(const std::filesystem::path& run_dir);

struct Report {
  exp::ResultsTable table;
  std::vector<std::filesystem::path> files;  // everything written
};

// Writes results.{txt,json,csv} and, per run, "<run name>_losses",
// "<run name>_fairness" and "<run name>_projection" charts for whichever
// logs exist. Throws EmptyRows or MissingMetricsFile.
Report WriteReport(const std::vector<std::filesystem::path>& run_dirs,
                   const std::filesystem::path& out_dir);

}  // namespace fdvae::report

#endif  // FDVAE_REPORT_HPP_
