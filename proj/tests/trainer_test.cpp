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
#include <random>

#include "fdvae/checkpoint.hpp"
#include "fdvae/error.hpp"
#include "fdvae/optim.hpp"
#include "fdvae/random.hpp"
#include "fdvae/trainer.hpp"

namespace fdvae::train {
namespace {

namespace fs = std::filesystem;
using exp::ExperimentConfig;
using exp::Variant;

const data::DatasetSplits& SmallSplits() {
  static const data::DatasetSplits splits = [] {
    data::SyntheticSpec spec;
    spec.train_count = 32;
    spec.validation_count = 16;
    spec.test_count = 16;
    return data::GenerateSynthetic(spec);
  }();
  return splits;
}

ExperimentConfig Small(Variant v) {
  ExperimentConfig c = exp::DeskScaleConfig(v);
  c.schedule.repr_epochs = 1;
  c.schedule.downstream_epochs = 1;
  c.schedule.batch_size = 8;
  c.schedule.repr_lr = 1e-3;
  c.schedule.downstream_lr = 1e-2;
  return c;
}

fs::path TempDir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("fdvae_trainer_" + name);
  fs::remove_all(dir);
  return dir;
}

std::vector<nn::Parameter<float>*> Concat(std::vector<nn::Parameter<float>*> a,
                                          const std::vector<nn::Parameter<float>*>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::vector<double> Column(const std::vector<StepRecord>& log,
                           std::optional<double> loss::LossComponents::*field) {
  std::vector<double> out;
  for (const auto& r : log) out.push_back((r.report.components.*field).value());
  return out;
}

TEST(Representation, DeterministicLog) {
  const ExperimentConfig c = Small(Variant::kFdVae);
  const auto a = TrainRepresentation(c, SmallSplits());
  const auto b = TrainRepresentation(c, SmallSplits());
  ASSERT_EQ(a.log.size(), 4u);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(ToJson(a.log[i]), ToJson(b.log[i])) << "step " << i;
  }
  EXPECT_EQ(a.epochs[0].validation_loss, b.epochs[0].validation_loss);
}

TEST(Representation, VaeLogOmitsFairnessTerms) {
  const auto result = TrainRepresentation(Small(Variant::kVae), SmallSplits());
  for (const auto& r : result.log) {
    const auto j = ToJson(r);
    EXPECT_TRUE(j.contains("recon") && j.contains("kl"));
    for (const char* absent : {"tc", "disc", "cls_t", "cls_p", "adv_t", "adv_p"}) {
      EXPECT_FALSE(j.contains(absent)) << absent;
    }
    EXPECT_EQ(StepRecordFromJson(j).report.components.tc, std::nullopt);
  }
}

TEST(Representation, ZeroWeightsMatchVaeStepForStep) {
  ExperimentConfig fd = Small(Variant::kFdVae);
  fd.schedule.repr_epochs = 2;
  fd.weights.alpha = fd.weights.beta = fd.weights.gamma = 0;
  ExperimentConfig vae = Small(Variant::kVae);
  vae.schedule.repr_epochs = 2;
  const auto a = TrainRepresentation(fd, SmallSplits());
  const auto b = TrainRepresentation(vae, SmallSplits());
  ASSERT_EQ(a.log.size(), b.log.size());
  EXPECT_EQ(Column(a.log, &loss::LossComponents::recon),
            Column(b.log, &loss::LossComponents::recon));
  EXPECT_EQ(Column(a.log, &loss::LossComponents::kl),
            Column(b.log, &loss::LossComponents::kl));
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].report.total, b.log[i].report.total);
  }
}

TEST(Representation, FactorVaeWithZeroAlphaMatchesVae) {
  ExperimentConfig f = Small(Variant::kFactorVae);
  f.weights.alpha = 0;
  const auto a = TrainRepresentation(f, SmallSplits());
  const auto b = TrainRepresentation(Small(Variant::kVae), SmallSplits());
  EXPECT_EQ(Column(a.log, &loss::LossComponents::recon),
            Column(b.log, &loss::LossComponents::recon));
}

TEST(Representation, OverfitsSingleImage) {
  const data::Dataset& train = SmallSplits().train;
  const std::vector<std::size_t> copies(16, 0);
  data::DatasetSplits one{train.Subset(copies), {}, {}};
  ExperimentConfig c = Small(Variant::kFdVae);
  c.weights.alpha = c.weights.beta = c.weights.gamma = 0;
  c.schedule.batch_size = 16;
  c.schedule.repr_epochs = 500;
  c.schedule.repr_lr = 2e-3;
  const auto result = TrainRepresentation(c, one);
  ASSERT_EQ(result.log.size(), 500u);
  const double first = *result.log.front().report.components.recon;
  const double last = *result.log.back().report.components.recon;
  EXPECT_LT(last, 0.01 * first) << first << " -> " << last;
}

// Noise-free autoencoding through the posterior mean. Under the sampled
// objective a single image drives the posterior onto the prior, and the
// decoder never sees the mean code.
TEST(Representation, DecodesOverfitMeanCode) {
  const data::Dataset& train = SmallSplits().train;
  const data::LabeledImageBatch batch = data::MakeBatch(train, std::vector<std::size_t>{0});
  model::ModelBundle b(model::ModelSpec{}, 4);
  nn::Adam<float> opt(Concat(b.encoder.Parameters(), b.decoder.Parameters()),
                      {1e-3, 0.9, 0.999, 1e-8});
  for (int step = 0; step < 1000; ++step) {
    opt.ZeroGrad();
    const model::GaussianPosterior post = b.encoder.Forward(batch.images);
    const Tensor x_hat = b.decoder.Forward(post.mu);
    const auto recon = loss::ReconstructionLoss(batch.images, x_hat);
    b.encoder.Backward(b.decoder.Backward(recon.grad), Tensor(post.log_var.shape()));
    opt.Step();
  }
  const Tensor x_hat = model::Decode(b, model::Encode(b, batch.images).mu);
  double total = 0, worst = 0;
  for (std::size_t i = 0; i < x_hat.size(); ++i) {
    total += std::abs(x_hat[i] - batch.images[i]);
    worst = std::max(worst, double(std::abs(x_hat[i] - batch.images[i])));
  }
  EXPECT_LT(total / double(x_hat.size()), 0.05) << "max " << worst;
}

TEST(Representation, CheckpointReproducesValidationLoss) {
  const fs::path dir = TempDir("ckpt");
  ExperimentConfig c = Small(Variant::kFdVae);
  c.schedule.repr_epochs = 2;
  TrainOptions options;
  options.run_dir = dir;
  const auto result = TrainRepresentation(c, SmallSplits(), options);
  const Checkpoint loaded = LoadCheckpoint(dir / "checkpoints" / "repr_final.ckpt");
  EXPECT_EQ(loaded.epoch, 2u);
  EXPECT_EQ(loaded.config_hash, result.checkpoint.config_hash);
  EXPECT_EQ(loaded.log_digest, result.checkpoint.log_digest);
  const double in_memory = ValidationLoss(result.checkpoint, SmallSplits().validation);
  EXPECT_EQ(ValidationLoss(loaded, SmallSplits().validation), in_memory);
  EXPECT_EQ(result.epochs.back().validation_loss, in_memory);
  EXPECT_TRUE(fs::exists(dir / "logs" / "repr_steps.jsonl"));
  fs::remove_all(dir);
}

TEST(Representation, IsolationChecksPass) {
  TrainOptions options;
  options.isolation_checks = true;
  options.max_steps = 2;
  const auto result = TrainRepresentation(Small(Variant::kFdVae), SmallSplits(), options);
  EXPECT_EQ(result.log.size(), 2u);
}

TEST(Representation, Errors) {
  ExperimentConfig c = Small(Variant::kVae);
  c.schedule.batch_size = 64;
  try {
    TrainRepresentation(c, SmallSplits());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "DataExhausted");
  }
  c.schedule.batch_size = 1;
  try {
    TrainRepresentation(c, SmallSplits());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "InvalidSchedule");
  }
}

TEST(Downstream, EncoderStaysFrozen) {
  const ExperimentConfig c = Small(Variant::kFdVae);
  const auto repr = TrainRepresentation(c, SmallSplits());
  auto encoder_digest = [](const Checkpoint& ck) {
    return model::ParameterDigest(ck.bundle->encoder.Parameters());
  };
  const std::uint64_t before = encoder_digest(repr.checkpoint);
  const auto down = TrainDownstream(c, repr.checkpoint, SmallSplits());
  EXPECT_EQ(encoder_digest(down.checkpoint), before);
  EXPECT_EQ(encoder_digest(repr.checkpoint), before);
  EXPECT_TRUE(down.checkpoint.has_downstream());
  EXPECT_EQ(down.checkpoint.phase, "downstream");

  const Embedding e = EmbedDataset(down.checkpoint, SmallSplits().test);
  const auto preds = Predict(down.checkpoint, e);
  EXPECT_EQ(preds.size(), SmallSplits().test.size());
}

TEST(Downstream, RejectsMismatchedCheckpoint) {
  const auto repr = TrainRepresentation(Small(Variant::kVae), SmallSplits());
  try {
    TrainDownstream(Small(Variant::kFdVae), repr.checkpoint, SmallSplits());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "IncompatibleCheckpoint");
  }
}

TEST(Embedding, ShapeAndDeterminism) {
  const Checkpoint ck = NewCheckpoint(Small(Variant::kVae), 3);
  const auto& test = SmallSplits().test;
  const Embedding a = EmbedDataset(ck, test, 5);
  const Embedding b = EmbedDataset(ck, test, 5);
  const Embedding c = EmbedDataset(ck, test, 16);
  EXPECT_EQ(a.mu.shape(), (Shape{test.size(), 60}));
  EXPECT_EQ(a.mu.storage(), b.mu.storage());
  for (std::size_t i = 0; i < a.mu.size(); ++i) EXPECT_NEAR(a.mu[i], c.mu[i], 1e-4);
  EXPECT_EQ(a.protected_labels, test.protected_labels());
}

TEST(RemovalLatents, PerfectColumnAndDegenerateLabels) {
  RandomEngine rng = MakeEngine(1, Stream::kNoise);
  std::normal_distribution<float> n;
  Tensor table({50, 60});
  std::vector<std::uint8_t> labels(50);
  for (std::size_t r = 0; r < 50; ++r) {
    labels[r] = std::uint8_t(r % 3 == 0);
    for (std::size_t c = 0; c < 60; ++c) table.at(r, c) = n(rng);
    table.at(r, 7) = labels[r];
    table.at(r, 11) = 1.0f;  // zero variance
  }
  EXPECT_EQ(SelectRemovalLatents(table, labels, 1), (std::vector<std::size_t>{7}));
  const std::vector<std::uint8_t> flat(50, 1);
  try {
    SelectRemovalLatents(table, flat, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "DegenerateColumn");
  }
}

TEST(RemovalLatents, MatchesExhaustiveScan) {
  RandomEngine rng = MakeEngine(2, Stream::kNoise);
  std::normal_distribution<float> n;
  std::bernoulli_distribution coin(0.4);
  Tensor table({80, 60});
  std::vector<std::uint8_t> labels(80);
  for (std::size_t r = 0; r < 80; ++r) {
    labels[r] = coin(rng);
    for (std::size_t c = 0; c < 60; ++c) table.at(r, c) = n(rng) + 0.02f * c * labels[r];
  }
  std::vector<std::pair<double, std::size_t>> scores;
  for (std::size_t c = 0; c < 60; ++c) {
    double mx = 0, my = 0;
    for (std::size_t r = 0; r < 80; ++r) mx += table.at(r, c), my += labels[r];
    mx /= 80, my /= 80;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t r = 0; r < 80; ++r) {
      sxy += (table.at(r, c) - mx) * (labels[r] - my);
      sxx += (table.at(r, c) - mx) * (table.at(r, c) - mx);
      syy += (labels[r] - my) * (labels[r] - my);
    }
    scores.push_back({-std::abs(sxy / std::sqrt(sxx * syy)), c});
  }
  std::sort(scores.begin(), scores.end());
  EXPECT_EQ(SelectRemovalLatents(table, labels, 2),
            (std::vector<std::size_t>{scores[0].second, scores[1].second}));
}

}  // namespace
}  // namespace fdvae::train
