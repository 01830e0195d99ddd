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

// End-to-end runs, result aggregation, linear probes and embedding export.

#ifndef FDVAE_EXPERIMENTS_HPP_
#define FDVAE_EXPERIMENTS_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fdvae/checkpoint.hpp"
#include "fdvae/config.hpp"
#include "fdvae/datasets.hpp"
#include "fdvae/metrics.hpp"
#include "fdvae/trainer.hpp"

namespace fdvae::exp {

// Resolves the dataset section into train/validation/test images.
data::DatasetSplits LoadSplits(const DatasetSection& dataset);

// Run directory name: "<config hash>-s<seed>".
std::string RunName(const ExperimentConfig& config, std::uint64_t seed);

struct ResultRow {
  std::string variant_id;
  std::uint64_t seed = 0;
  std::string dataset_id;
  std::string config_hash;
  metrics::MetricReport report;  // test split
  double seconds = 0;
  // Linear-probe test accuracies keyed "<attribute>@<block>", e.g.
  // "protected@TAL" or "target@full".
  std::map<std::string, double> probes;

  friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

nlohmann::json ToJson(const ResultRow& row);
ResultRow ResultRowFromJson(const nlohmann::json& j);

struct RunOptions {
  std::filesystem::path output_root = "runs";
  bool isolation_checks = false;
  bool export_embeddings = true;
  std::ostream* progress = nullptr;
};

// Trains and evaluates one seed under output_root/RunName(config, seed).
ResultRow RunSeed(const ExperimentConfig& config, std::uint64_t seed,
                  const data::DatasetSplits& splits, const RunOptions& options);

// Downstream training, test evaluation and artifact export on top of an
// existing representation checkpoint (its seed is used). Writes into
// output_root/RunName(config, checkpoint seed).
ResultRow RunDownstream(const ExperimentConfig& config, const Checkpoint& representation,
                        const data::DatasetSplits& splits, const RunOptions& options);

// One row per seed in config.seeds. Finished seeds keep their run
// directories when a later seed fails.
std::vector<ResultRow> RunExperiment(const ExperimentConfig& config, const RunOptions& options);

// The six ablation rows (ffvae_approx baseline, +cls, +adv, +mal with three
// downstream inputs) derived from a base fdvae config.
std::vector<ExperimentConfig> AblationConfigs(const ExperimentConfig& base);

// Logistic-regression probe (Newton iterations, small ridge) fitted on one
// set and scored on another. Returns test accuracy.
double LinearProbeAccuracy(const Eigen::MatrixXd& train_x, std::span<const std::uint8_t> train_y,
                           const Eigen::MatrixXd& test_x, std::span<const std::uint8_t> test_y);

// Probe accuracies for both attributes on every named block of the layout
// and on the full code: fitted on `fit`, scored on `score`. Keys ending in
// "~z" probe one sampled code per image (mu + sigma * eps, eps drawn from
// `seed`) instead of the posterior mean.
std::map<std::string, double> ProbeSubspaces(const model::LatentLayout& layout,
                                             const train::Embedding& fit,
                                             const train::Embedding& score,
                                             std::uint64_t seed = 0);

// Mean and sample standard deviation (0 for a single value).
struct Summary {
  double mean = 0;
  double sd = 0;
};
Summary Summarize(std::span<const double> values);

struct ResultCell {
  std::string variant_id;
  std::string dataset_id;
  std::size_t count = 0;
  std::map<std::string, Summary> metrics;  // accuracy, equalized_accuracy, ...
};

struct ResultsTable {
  std::vector<ResultCell> cells;  // in first-seen order

  std::string Format() const;
  nlohmann::json ToJson() const;
  std::string ToCsv() const;
};

// Groups rows by (variant_id, dataset_id). Throws EmptyRows.
ResultsTable MakeResultsTable(std::span<const ResultRow> rows);

// Projection onto the top principal components of the rows of `x`.
struct Projection {
  Eigen::MatrixXd coordinates;  // [n, k]
  Eigen::MatrixXd components;   // [d, k], unit columns
  Eigen::VectorXd mean;         // [d]
  Eigen::VectorXd variances;    // [k], descending
};
Projection PrincipalProjection(const Eigen::MatrixXd& x, int k);

// Writes embeddings.csv (sample_id, subspace, v0..v19, y_t, y_p; three rows
// per sample) and projection.csv (sample_id, subspace, pc1, pc2) computed
// over all subspace rows jointly. Returns the number of embedding rows.
std::size_t ExportEmbeddings(const Checkpoint& checkpoint, const data::Dataset& dataset,
                             const std::filesystem::path& out_dir);

}  // namespace fdvae::exp

#endif  // FDVAE_EXPERIMENTS_HPP_
