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

// Two-phase optimization: representation learning (encoder, decoder, heads,
// then one discriminator step per batch) and downstream classification on
// the frozen encoder.

#ifndef FDVAE_TRAINER_HPP_
#define FDVAE_TRAINER_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdvae/checkpoint.hpp"
#include "fdvae/config.hpp"
#include "fdvae/datasets.hpp"
#include "fdvae/losses.hpp"
#include "fdvae/metrics.hpp"

namespace fdvae::train {

// One optimization step of the representation phase.
struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;  // global, from 0
  loss::LossReport report;
};

// Absent components are omitted, never written as zero.
nlohmann::json ToJson(const StepRecord& record);
StepRecord StepRecordFromJson(const nlohmann::json& j);

struct RepresentationEpoch {
  std::size_t epoch = 0;
  loss::LossComponents mean;  // per-component mean over the epoch's steps
  double total = 0;
  double validation_loss = 0;
  double seconds = 0;
};

struct DownstreamEpoch {
  std::size_t epoch = 0;
  double task = 0;
  std::optional<double> adversary;
  metrics::MetricReport validation;
  double seconds = 0;
};

nlohmann::json ToJson(const RepresentationEpoch& e);
nlohmann::json ToJson(const DownstreamEpoch& e);

struct TrainOptions {
  // Logs and checkpoints go here; nothing is written when empty.
  std::filesystem::path run_dir;
  // Verifies per step that each optimizer touches only its own parameters.
  bool isolation_checks = false;
  // Stops after this many steps (0 = run the whole schedule).
  std::size_t max_steps = 0;
  std::ostream* progress = nullptr;
  std::function<void(const StepRecord&)> on_step;
};

struct RepresentationResult {
  Checkpoint checkpoint;
  std::vector<StepRecord> log;
  std::vector<RepresentationEpoch> epochs;
};

// Trains with config.schedule.seed. Throws TrainingError NonFiniteLoss (the
// previous epoch's checkpoint stays on disk) or DataExhausted when the train
// split cannot fill a single batch.
RepresentationResult TrainRepresentation(const exp::ExperimentConfig& config,
                                         const data::DatasetSplits& splits,
                                         const TrainOptions& options = {});

struct DownstreamResult {
  Checkpoint checkpoint;  // best epoch by validation equalized accuracy
  std::vector<DownstreamEpoch> epochs;
  std::size_t best_epoch = 0;
};

// The checkpoint's encoder is never updated; an internal digest check
// enforces it. Throws IncompatibleCheckpoint when the checkpoint's
// architecture does not match the config.
DownstreamResult TrainDownstream(const exp::ExperimentConfig& config,
                                 const Checkpoint& representation,
                                 const data::DatasetSplits& splits,
                                 const TrainOptions& options = {});

// Posterior means and log-variances for a whole dataset, in dataset order.
struct Embedding {
  Tensor mu;       // [N,60]
  Tensor log_var;  // [N,60]
  std::vector<std::uint8_t> target_labels;
  std::vector<std::uint8_t> protected_labels;
};

Embedding EmbedDataset(const Checkpoint& checkpoint, const data::Dataset& dataset,
                       std::size_t batch_size = 128);

// The k columns with the largest |Pearson correlation| to the labels, ties to
// the lower index. Zero-variance columns count as correlation 0. Throws
// DegenerateColumn when every label is equal.
std::vector<std::size_t> SelectRemovalLatents(const Tensor& table,
                                              std::span<const std::uint8_t> labels,
                                              std::size_t k);

// Hard downstream predictions from posterior means (logit > 0).
std::vector<std::uint8_t> Predict(const Checkpoint& checkpoint, const Embedding& embedding);

// Mean recon + kl_beta * kl over a dataset using posterior means.
double ValidationLoss(const Checkpoint& checkpoint, const data::Dataset& dataset,
                      std::size_t batch_size = 128);

}  // namespace fdvae::train

#endif  // FDVAE_TRAINER_HPP_
