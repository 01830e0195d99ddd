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
#include <fstream>
#include <random>

#include "fdvae/error.hpp"
#include "fdvae/experiments.hpp"
#include "fdvae/random.hpp"

namespace fdvae::exp {
namespace {

namespace fs = std::filesystem;

ExperimentConfig Tiny() {
  ExperimentConfig c = DeskScaleConfig(Variant::kFdVae);
  c.dataset.synthetic.train_count = 32;
  c.dataset.synthetic.validation_count = 16;
  c.dataset.synthetic.test_count = 16;
  c.schedule.repr_epochs = 1;
  c.schedule.downstream_epochs = 1;
  c.schedule.batch_size = 8;
  return c;
}

fs::path TempDir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("fdvae_exp_" + name);
  fs::remove_all(dir);
  return dir;
}

std::size_t LineCount(const fs::path& path) {
  std::ifstream in(path);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

TEST(RunExperiment, OneRowPerSeedSharingTheHash) {
  const fs::path root = TempDir("seeds");
  RunOptions options;
  options.output_root = root;
  const ExperimentConfig c = Tiny();
  const auto rows = RunExperiment(c, options);
  ASSERT_EQ(rows.size(), 3u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].seed, c.seeds[i]);
    EXPECT_EQ(rows[i].config_hash, ConfigHash(c));
    EXPECT_EQ(rows[i].variant_id, "fdvae+zt_plus_transformed_zm");
    const fs::path dir = root / RunName(c, rows[i].seed);
    EXPECT_EQ(ResultRowFromJson(nlohmann::json::parse(std::ifstream(dir / "metrics.json"))),
              rows[i]);
    EXPECT_TRUE(fs::exists(dir / "config.json"));
    EXPECT_TRUE(fs::exists(dir / "predictions.csv"));
    EXPECT_TRUE(rows[i].probes.contains("protected@TAL"));
    EXPECT_TRUE(rows[i].probes.contains("protected@TAL~z"));
  }
  EXPECT_NE(rows[0].probes, rows[1].probes);

  // Same config, fresh directory: identical metrics.
  RunOptions again = options;
  again.output_root = TempDir("seeds_again");
  ExperimentConfig one = c;
  one.seeds = {c.seeds[0]};
  const auto rerun = RunExperiment(one, again);
  EXPECT_EQ(rerun[0].report, rows[0].report);
  EXPECT_EQ(rerun[0].probes, rows[0].probes);
  fs::remove_all(root);
  fs::remove_all(again.output_root);
}

ResultRow Row(const std::string& variant, double acc) {
  ResultRow r;
  r.variant_id = variant;
  r.dataset_id = "d";
  r.report.accuracy = acc;
  r.report.equalized_accuracy = acc;
  r.report.equal_opportunity = 1 - acc;
  r.report.equalized_odds = 1 - acc;
  return r;
}

TEST(ResultsTable, MeanAndSampleSd) {
  const std::vector<ResultRow> rows = {Row("a", 0.6), Row("b", 0.9), Row("a", 0.8),
                                       Row("a", 0.7)};
  const ResultsTable t = MakeResultsTable(rows);
  ASSERT_EQ(t.cells.size(), 2u);
  EXPECT_EQ(t.cells[0].variant_id, "a");
  EXPECT_EQ(t.cells[0].count, 3u);
  EXPECT_NEAR(t.cells[0].metrics.at("accuracy").mean, 0.7, 1e-12);
  EXPECT_NEAR(t.cells[0].metrics.at("accuracy").sd, 0.1, 1e-12);
  EXPECT_EQ(t.cells[1].metrics.at("accuracy").sd, 0.0);
  EXPECT_NE(t.Format().find("0.7000 ± 0.1000"), std::string::npos);
  EXPECT_EQ(t.ToJson().at("cells").size(), 2u);
  EXPECT_NE(t.ToCsv().find("accuracy_mean"), std::string::npos);

  const std::vector<ResultRow> twins = {Row("a", 0.6), Row("a", 0.6)};
  EXPECT_EQ(MakeResultsTable(twins).cells[0].metrics.at("accuracy").sd, 0.0);
  try {
    MakeResultsTable({});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "EmptyRows");
  }
}

TEST(ResultRow, JsonRoundTrip) {
  ResultRow r = Row("fdvae+zt_only", 0.75);
  r.seed = 2;
  r.config_hash = "abc";
  r.seconds = 1.5;
  r.probes = {{"protected@TAL", 0.5}};
  EXPECT_EQ(ResultRowFromJson(ToJson(r)), r);
}

TEST(Projection, MatchesSvdOracle) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  Eigen::MatrixXd x(50, 6);
  for (Eigen::Index r = 0; r < 50; ++r) {
    for (Eigen::Index c = 0; c < 6; ++c) x(r, c) = n(rng) * double(c + 1);
  }
  const Projection p = PrincipalProjection(x, 2);
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  for (int k = 0; k < 2; ++k) {
    const double sv = svd.singularValues()(k);
    EXPECT_NEAR(p.variances(k), sv * sv / 49.0, 1e-9);
    EXPECT_NEAR(std::abs(p.components.col(k).dot(svd.matrixV().col(k))), 1.0, 1e-9);
    EXPECT_NEAR(p.components.col(k).norm(), 1.0, 1e-12);
  }
  EXPECT_GE(p.variances(0), p.variances(1));
  EXPECT_TRUE(p.coordinates.isApprox(centered * p.components));
  EXPECT_THROW(PrincipalProjection(x, 7), Error);
}

TEST(Projection, RecoversPlane) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n;
  Eigen::Vector3d u(1, 2, 2), v(2, -2, 1);
  u.normalize();
  v.normalize();
  Eigen::MatrixXd x(40, 3);
  for (Eigen::Index r = 0; r < 40; ++r) {
    x.row(r) = (3.0 * n(rng) * u + n(rng) * v + Eigen::Vector3d(1, 1, 1)).transpose();
  }
  const Projection p = PrincipalProjection(x, 2);
  const Eigen::Vector3d normal = u.cross(v);
  for (int k = 0; k < 2; ++k) EXPECT_NEAR(p.components.col(k).dot(normal), 0.0, 1e-9);
  const Eigen::MatrixXd back = (p.coordinates * p.components.transpose()).rowwise() +
                               p.mean.transpose();
  EXPECT_TRUE(back.isApprox(x, 1e-9));
}

TEST(LinearProbe, SeparableAndRandom) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n;
  std::bernoulli_distribution coin(0.5);
  auto make = [&](std::size_t rows, bool informative, std::vector<std::uint8_t>& y) {
    Eigen::MatrixXd x(rows, 5);
    y.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      y[r] = coin(rng);
      for (int c = 0; c < 5; ++c) x(r, c) = n(rng);
      if (informative) x(r, 2) += y[r] ? 4.0 : -4.0;
    }
    return x;
  };
  std::vector<std::uint8_t> ya, yb;
  const Eigen::MatrixXd a = make(200, true, ya), b = make(400, true, yb);
  EXPECT_GT(LinearProbeAccuracy(a, ya, b, yb), 0.99);
  const Eigen::MatrixXd c = make(200, false, ya), d = make(2000, false, yb);
  EXPECT_NEAR(LinearProbeAccuracy(c, ya, d, yb), 0.5, 0.05);
}

TEST(Embeddings, ThreeRowsPerSample) {
  const fs::path dir = TempDir("embed");
  const ExperimentConfig c = Tiny();
  const Checkpoint ck = NewCheckpoint(c, 1);
  const data::DatasetSplits splits = LoadSplits(c.dataset);
  const std::size_t rows = ExportEmbeddings(ck, splits.test, dir);
  EXPECT_EQ(rows, 3 * splits.test.size());
  EXPECT_EQ(LineCount(dir / "embeddings.csv"), rows + 1);
  EXPECT_EQ(LineCount(dir / "projection.csv"), rows + 1);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace fdvae::exp
