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

#include "fdvae/experiments.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "fdvae/error.hpp"
#include "fdvae/random.hpp"

namespace fdvae::exp {

using nlohmann::json;

namespace {

const char* const kMetricNames[] = {"accuracy", "equalized_accuracy", "equal_opportunity",
                                    "equalized_odds"};

double MetricValue(const metrics::MetricReport& r, const std::string& name) {
  if (name == "accuracy") return r.accuracy;
  if (name == "equalized_accuracy") return r.equalized_accuracy;
  if (name == "equal_opportunity") return r.equal_opportunity;
  return r.equalized_odds;
}

Eigen::MatrixXd ToMatrix(const Tensor& t, std::size_t offset, std::size_t width) {
  Eigen::MatrixXd m(t.dim(0), width);
  for (std::size_t r = 0; r < t.dim(0); ++r) {
    for (std::size_t c = 0; c < width; ++c) m(r, c) = t.at(r, offset + c);
  }
  return m;
}

Tensor SampleCodes(const train::Embedding& e, std::uint64_t seed, std::uint64_t sub) {
  RandomEngine rng = MakeEngine(seed, Stream::kProbe, sub);
  std::normal_distribution<double> normal;
  Tensor z(e.mu.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    z[i] = static_cast<float>(e.mu[i] + std::exp(0.5 * e.log_var[i]) * normal(rng));
  }
  return z;
}

}  // namespace

data::DatasetSplits LoadSplits(const DatasetSection& dataset) {
  if (dataset.kind == DatasetSection::Kind::kSynthetic) {
    return data::GenerateSynthetic(dataset.synthetic);
  }
  if (dataset.composition) {
    const auto records = data::LoadAttributeDataset(dataset.root, dataset.pair, "all");
    const auto composed = data::ComposeSplit(records, *dataset.composition);
    return {data::LoadImages(composed.train), data::LoadImages(composed.validation),
            data::LoadImages(composed.test)};
  }
  return {data::LoadImages(data::LoadAttributeDataset(dataset.root, dataset.pair, "train")),
          data::LoadImages(data::LoadAttributeDataset(dataset.root, dataset.pair, "val")),
          data::LoadImages(data::LoadAttributeDataset(dataset.root, dataset.pair, "test"))};
}

std::string RunName(const ExperimentConfig& config, std::uint64_t seed) {
  return ConfigHash(config) + "-s" + std::to_string(seed);
}

json ToJson(const ResultRow& row) {
  return {{"variant_id", row.variant_id}, {"seed", row.seed},
          {"dataset_id", row.dataset_id}, {"config_hash", row.config_hash},
          {"metrics", metrics::ToJson(row.report)}, {"seconds", row.seconds},
          {"probes", row.probes}};
}

ResultRow ResultRowFromJson(const json& j) {
  try {
    ResultRow row;
    row.variant_id = j.at("variant_id").get<std::string>();
    row.seed = j.at("seed").get<std::uint64_t>();
    row.dataset_id = j.at("dataset_id").get<std::string>();
    row.config_hash = j.at("config_hash").get<std::string>();
    row.report = metrics::MetricReportFromJson(j.at("metrics"));
    row.seconds = j.at("seconds").get<double>();
    if (j.contains("probes")) row.probes = j.at("probes").get<std::map<std::string, double>>();
    return row;
  } catch (const json::exception& e) {
    throw DataError("MalformedMetricsFile", e.what());
  }
}

// Probes ----------------------------------------------------------------------

double LinearProbeAccuracy(const Eigen::MatrixXd& train_x, std::span<const std::uint8_t> train_y,
                           const Eigen::MatrixXd& test_x, std::span<const std::uint8_t> test_y) {
  const Eigen::Index n = train_x.rows(), d = train_x.cols();
  if (n == 0 || std::size_t(n) != train_y.size() || std::size_t(test_x.rows()) != test_y.size() ||
      test_x.cols() != d || test_y.empty()) {
    throw DataError("LengthMismatch", "probe inputs and labels disagree in size");
  }
  // Standardize with train statistics; constant columns stay at zero.
  const Eigen::RowVectorXd mean = train_x.colwise().mean();
  Eigen::RowVectorXd scale =
      ((train_x.rowwise() - mean).array().square().colwise().sum() / double(n)).sqrt();
  for (Eigen::Index c = 0; c < d; ++c) scale(c) = scale(c) > 1e-12 ? 1.0 / scale(c) : 0.0;
  auto design = [&](const Eigen::MatrixXd& x) {
    Eigen::MatrixXd a(x.rows(), d + 1);
    a.leftCols(d) = ((x.rowwise() - mean).array().rowwise() * scale.array()).matrix();
    a.col(d).setOnes();
    return a;
  };
  const Eigen::MatrixXd a = design(train_x);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = train_y[i];

  constexpr double kRidge = 1e-2;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d + 1);
  for (int iter = 0; iter < 50; ++iter) {
    const Eigen::VectorXd p = (1.0 + (-(a * w)).array().exp()).inverse().matrix();
    Eigen::VectorXd grad = a.transpose() * (p - y) / double(n);
    grad.head(d) += kRidge * w.head(d);
    const Eigen::VectorXd s = (p.array() * (1.0 - p.array())).matrix();
    Eigen::MatrixXd hessian = a.transpose() * s.asDiagonal() * a / double(n);
    hessian.diagonal().head(d).array() += kRidge;
    hessian.diagonal()(d) += 1e-9;
    const Eigen::VectorXd delta = hessian.ldlt().solve(grad);
    w -= delta;
    if (delta.lpNorm<Eigen::Infinity>() < 1e-10) break;
  }
  const Eigen::VectorXd logits = design(test_x) * w;
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    correct += std::uint8_t(logits(i) > 0.0) == test_y[i];
  }
  return double(correct) / double(test_y.size());
}

std::map<std::string, double> ProbeSubspaces(const model::LatentLayout& layout,
                                             const train::Embedding& fit,
                                             const train::Embedding& score,
                                             std::uint64_t seed) {
  std::vector<model::Subspace> blocks;
  if (layout.blocks.size() <= 3) blocks = layout.blocks;
  blocks.push_back({"full", 0, model::kLatentDim});
  const Tensor fit_z = SampleCodes(fit, seed, 0);
  const Tensor score_z = SampleCodes(score, seed, 1);
  std::map<std::string, double> out;
  auto probe = [&](const Tensor& f, const Tensor& s, const model::Subspace& b,
                   const std::string& suffix) {
    const Eigen::MatrixXd fx = ToMatrix(f, b.offset, b.width);
    const Eigen::MatrixXd sx = ToMatrix(s, b.offset, b.width);
    out["target@" + b.name + suffix] =
        LinearProbeAccuracy(fx, fit.target_labels, sx, score.target_labels);
    out["protected@" + b.name + suffix] =
        LinearProbeAccuracy(fx, fit.protected_labels, sx, score.protected_labels);
  };
  for (const auto& b : blocks) {
    probe(fit.mu, score.mu, b, "");
    probe(fit_z, score_z, b, "~z");
  }
  return out;
}

// Runs ------------------------------------------------------------------------

ResultRow RunSeed(const ExperimentConfig& base, std::uint64_t seed,
                  const data::DatasetSplits& splits, const RunOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentConfig config = base;
  config.schedule.seed = seed;
  config.Validate();

  const std::filesystem::path dir = options.output_root / RunName(config, seed);
  std::filesystem::create_directories(dir);
  SaveConfig(dir / "config.json", config);

  train::TrainOptions topts;
  topts.run_dir = dir;
  topts.isolation_checks = options.isolation_checks;
  topts.progress = options.progress;
  if (options.progress) {
    *options.progress << "== " << config.variant_id() << " seed " << seed << " -> "
                      << dir.string() << std::endl;
  }
  const auto repr = train::TrainRepresentation(config, splits, topts);
  ResultRow row = RunDownstream(config, repr.checkpoint, splits, options);
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::ofstream(dir / "metrics.json") << ToJson(row).dump(2) << '\n';
  return row;
}

ResultRow RunDownstream(const ExperimentConfig& base, const Checkpoint& representation,
                        const data::DatasetSplits& splits, const RunOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentConfig config = base;
  config.schedule.seed = representation.seed;
  config.Validate();
  const std::uint64_t seed = representation.seed;

  const std::filesystem::path dir = options.output_root / RunName(config, seed);
  std::filesystem::create_directories(dir);
  SaveConfig(dir / "config.json", config);

  train::TrainOptions topts;
  topts.run_dir = dir;
  topts.isolation_checks = options.isolation_checks;
  topts.progress = options.progress;
  const auto downstream = train::TrainDownstream(config, representation, splits, topts);
  const Checkpoint& ck = downstream.checkpoint;

  const train::Embedding test = train::EmbedDataset(ck, splits.test);
  const auto predictions = train::Predict(ck, test);
  std::vector<metrics::PredictionRecord> records;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    records.push_back({splits.test.ids()[i], predictions[i], test.target_labels[i],
                       test.protected_labels[i]});
  }
  metrics::WritePredictionLog(dir / "predictions.csv", records);

  ResultRow row;
  row.variant_id = config.variant_id();
  row.seed = seed;
  row.dataset_id = config.dataset.id();
  row.config_hash = ConfigHash(config);
  row.report = metrics::Evaluate(metrics::ConfusionFromRecords(records));
  const train::Embedding validation = train::EmbedDataset(ck, splits.validation);
  row.probes = ProbeSubspaces(VariantLossMask(config).layout, validation, test, seed);
  if (options.export_embeddings) ExportEmbeddings(ck, splits.test, dir / "embeddings");
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::ofstream(dir / "metrics.json") << ToJson(row).dump(2) << '\n';
  if (options.progress) {
    *options.progress << metrics::FormatReportHeader() << '\n'
                      << metrics::FormatReportRow(row.variant_id, row.report) << std::endl;
  }
  return row;
}

std::vector<ResultRow> RunExperiment(const ExperimentConfig& config, const RunOptions& options) {
  config.Validate();
  const data::DatasetSplits splits = LoadSplits(config.dataset);
  std::vector<ResultRow> rows;
  for (std::uint64_t seed : config.seeds) rows.push_back(RunSeed(config, seed, splits, options));
  return rows;
}

std::vector<ExperimentConfig> AblationConfigs(const ExperimentConfig& base) {
  auto make = [&](Variant v, bool cls, bool adv, bool mal, DownstreamInput input,
                  const std::string& suffix) {
    ExperimentConfig c = base;
    c.variant = v;
    c.ablation = {cls, adv, mal, input};
    c.name = base.name + "/" + suffix;
    return c;
  };
  return {
      make(Variant::kFfVaeApprox, false, false, false, DownstreamInput::kNonsensitiveOnly,
           "baseline"),
      make(Variant::kFdVae, true, false, false, DownstreamInput::kZtOnly, "cls"),
      make(Variant::kFdVae, true, true, false, DownstreamInput::kZtOnly, "cls_adv"),
      make(Variant::kFdVae, true, true, true, DownstreamInput::kZtOnly, "mal_zt"),
      make(Variant::kFdVae, true, true, true, DownstreamInput::kZtPlusRawZm, "mal_zt_zm"),
      make(Variant::kFdVae, true, true, true, DownstreamInput::kZtPlusTransformedZm,
           "mal_zt_fzm"),
  };
}

// Tables ----------------------------------------------------------------------

Summary Summarize(std::span<const double> values) {
  if (values.empty()) throw DataError("EmptyRows", "nothing to summarize");
  Summary s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / double(values.size());
  if (values.size() > 1) {
    double ss = 0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / double(values.size() - 1));
  }
  return s;
}

ResultsTable MakeResultsTable(std::span<const ResultRow> rows) {
  if (rows.empty()) throw DataError("EmptyRows", "results table needs at least one row");
  ResultsTable table;
  std::vector<std::vector<const ResultRow*>> members;
  for (const auto& row : rows) {
    std::size_t k = 0;
    while (k < table.cells.size() && (table.cells[k].variant_id != row.variant_id ||
                                      table.cells[k].dataset_id != row.dataset_id)) {
      ++k;
    }
    if (k == table.cells.size()) {
      table.cells.push_back({row.variant_id, row.dataset_id, 0, {}});
      members.emplace_back();
    }
    members[k].push_back(&row);
  }
  for (std::size_t k = 0; k < table.cells.size(); ++k) {
    auto& cell = table.cells[k];
    cell.count = members[k].size();
    for (const char* name : kMetricNames) {
      std::vector<double> values;
      for (const auto* r : members[k]) values.push_back(MetricValue(r->report, name));
      cell.metrics[name] = Summarize(values);
    }
    // Probes present on every member row.
    for (const auto& [probe, _] : members[k].front()->probes) {
      std::vector<double> values;
      for (const auto* r : members[k]) {
        if (auto it = r->probes.find(probe); it != r->probes.end()) values.push_back(it->second);
      }
      if (values.size() == members[k].size()) cell.metrics["probe:" + probe] = Summarize(values);
    }
  }
  return table;
}

std::string ResultsTable::Format() const {
  std::size_t width = std::string("variant").size();
  for (const auto& c : cells) width = std::max(width, c.variant_id.size());
  std::ostringstream out;
  out << std::left << std::setw(int(width)) << "variant" << "  " << std::setw(24) << "dataset"
      << "  n";
  for (const char* name : {"Acc", "EAcc", "EOpp", "EOdds"}) {
    out << "  " << std::setw(15) << name;
  }
  out << '\n';
  for (const auto& c : cells) {
    out << std::left << std::setw(int(width)) << c.variant_id << "  " << std::setw(24)
        << c.dataset_id << "  " << c.count;
    for (const char* name : kMetricNames) {
      const Summary& s = c.metrics.at(name);
      std::ostringstream v;
      v << std::fixed << std::setprecision(4) << s.mean << " ± " << s.sd;
      // "±" is two bytes in UTF-8 but one column wide.
      out << "  " << std::setw(16) << v.str();
    }
    out << '\n';
  }
  return out.str();
}

json ResultsTable::ToJson() const {
  json cells_json = json::array();
  for (const auto& c : cells) {
    json m;
    for (const auto& [name, s] : c.metrics) m[name] = {{"mean", s.mean}, {"sd", s.sd}};
    cells_json.push_back({{"variant_id", c.variant_id},
                          {"dataset_id", c.dataset_id},
                          {"count", c.count},
                          {"metrics", m}});
  }
  return {{"cells", cells_json}};
}

std::string ResultsTable::ToCsv() const {
  std::ostringstream out;
  out << "variant_id,dataset_id,count";
  for (const char* name : kMetricNames) out << ',' << name << "_mean," << name << "_sd";
  out << '\n';
  out << std::setprecision(17);
  for (const auto& c : cells) {
    out << c.variant_id << ",\"" << c.dataset_id << "\"," << c.count;
    for (const char* name : kMetricNames) {
      out << ',' << c.metrics.at(name).mean << ',' << c.metrics.at(name).sd;
    }
    out << '\n';
  }
  return out.str();
}

// Embeddings ------------------------------------------------------------------

Projection PrincipalProjection(const Eigen::MatrixXd& x, int k) {
  if (x.rows() < 2 || k < 1 || k > x.cols()) {
    throw DataError("InvalidProjection", "projection needs >= 2 rows and 1 <= k <= columns");
  }
  Projection p;
  p.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - p.mean.transpose();
  const Eigen::MatrixXd cov = centered.transpose() * centered / double(x.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  // Eigenvalues come back ascending.
  p.components = solver.eigenvectors().rightCols(k).rowwise().reverse();
  p.variances = solver.eigenvalues().tail(k).reverse();
  // Sign convention: the largest-magnitude loading of each component is positive.
  for (int c = 0; c < k; ++c) {
    Eigen::Index arg = 0;
    p.components.col(c).cwiseAbs().maxCoeff(&arg);
    if (p.components(arg, c) < 0) p.components.col(c) *= -1.0;
  }
  p.coordinates = centered * p.components;
  return p;
}

std::size_t ExportEmbeddings(const Checkpoint& checkpoint, const data::Dataset& dataset,
                             const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const train::Embedding e = train::EmbedDataset(checkpoint, dataset);
  const auto layout = model::LatentLayout::ThreeWay();
  const std::size_t n = dataset.size();
  Eigen::MatrixXd rows(Eigen::Index(3 * n), Eigen::Index(model::kSubspaceDim));

  std::ofstream emb(out_dir / "embeddings.csv");
  if (!emb) throw DataError("UnwritableFile", "cannot write " + (out_dir / "embeddings.csv").string());
  emb << "sample_id,subspace";
  for (std::size_t c = 0; c < model::kSubspaceDim; ++c) emb << ",v" << c;
  emb << ",y_t,y_p\n" << std::setprecision(9);
  std::size_t r = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& block : layout.blocks) {
      emb << dataset.ids()[i] << ',' << block.name;
      for (std::size_t c = 0; c < block.width; ++c) {
        const float v = e.mu.at(i, block.offset + c);
        rows(Eigen::Index(r), Eigen::Index(c)) = v;
        emb << ',' << v;
      }
      emb << ',' << int(e.target_labels[i]) << ',' << int(e.protected_labels[i]) << '\n';
      ++r;
    }
  }

  const Projection p = PrincipalProjection(rows, 2);
  std::ofstream proj(out_dir / "projection.csv");
  proj << "sample_id,subspace,pc1,pc2\n" << std::setprecision(9);
  r = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& block : layout.blocks) {
      proj << dataset.ids()[i] << ',' << block.name << ',' << p.coordinates(Eigen::Index(r), 0)
           << ',' << p.coordinates(Eigen::Index(r), 1) << '\n';
      ++r;
    }
  }
  return 3 * n;
}

}  // namespace fdvae::exp
