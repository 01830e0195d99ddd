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

#include "fdvae/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>

#include "fdvae/digest.hpp"
#include "fdvae/error.hpp"
#include "fdvae/optim.hpp"

namespace fdvae::train {

using nlohmann::json;
using Params = std::vector<nn::Parameter<float>*>;

namespace {

constexpr std::uint64_t kDownstreamEpochOffset = std::uint64_t{1} << 32;

const std::pair<const char*, std::optional<double> loss::LossComponents::*> kFields[] = {
    {"recon", &loss::LossComponents::recon}, {"kl", &loss::LossComponents::kl},
    {"tc", &loss::LossComponents::tc},       {"disc", &loss::LossComponents::disc},
    {"cls_t", &loss::LossComponents::cls_t}, {"cls_p", &loss::LossComponents::cls_p},
    {"adv_t", &loss::LossComponents::adv_t}, {"adv_p", &loss::LossComponents::adv_p},
};

double Seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

Params Concat(std::initializer_list<Params> groups) {
  Params out;
  for (const auto& g : groups) out.insert(out.end(), g.begin(), g.end());
  return out;
}

Params HeadParams(const std::unique_ptr<model::ClassifierHead>& head) {
  return head ? head->Parameters() : Params{};
}

Tensor StandardNormal(const Shape& shape, RandomEngine& rng) {
  Tensor out(shape);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = normal(rng);
  return out;
}

Tensor Block(const Tensor& z, const model::LatentLayout& layout, const std::string& name) {
  const auto& b = layout.Find(name);
  return SliceColumns(z, b.offset, b.width);
}

void AccumulateBlock(Tensor& dz, const model::LatentLayout& layout, const std::string& name,
                     const Tensor& grad) {
  ScatterColumns(dz, layout.Find(name).offset, grad, true);
}

void RequireIsolation(std::uint64_t before, const Params& params, const char* what) {
  if (model::ParameterDigest(params) != before) {
    throw InternalError("IsolationViolation", what);
  }
}

void RequireFinite(const Params& params) {
  for (const auto* p : params) {
    if (!p->value.AllFinite()) {
      throw TrainingError("NonFiniteLoss", "parameter " + p->name + " became non-finite");
    }
  }
}

// Stacks two [B,k] tensors into [2B,k].
Tensor StackRows(const Tensor& a, const Tensor& b) {
  Tensor out({a.dim(0) + b.dim(0), a.dim(1)});
  std::copy_n(a.data(), a.size(), out.data());
  std::copy_n(b.data(), b.size(), out.data() + a.size());
  return out;
}

Tensor RowRange(const Tensor& t, std::size_t begin, std::size_t count) {
  std::vector<std::size_t> rows(count);
  std::iota(rows.begin(), rows.end(), begin);
  return GatherRows(t, rows);
}

class JsonLines {
 public:
  explicit JsonLines(const std::filesystem::path& path) {
    if (path.empty()) return;
    out_.open(path, std::ios::trunc);
    if (!out_) throw DataError("UnwritableFile", "cannot write " + path.string());
  }
  void Write(const json& record) {
    const std::string line = record.dump();
    digest_.Update(line);
    digest_.Update(std::string_view("\n"));
    if (out_.is_open()) out_ << line << '\n';
  }
  void Flush() {
    if (out_.is_open()) out_.flush();
  }
  std::string digest() const { return digest_.Hex(); }

 private:
  std::ofstream out_;
  Fnv1a digest_;
};

std::shared_ptr<model::ModelBundle> CloneBundle(const Checkpoint& source) {
  auto clone = std::make_shared<model::ModelBundle>(source.bundle->spec(), source.seed);
  if (source.bundle->downstream) {
    clone->AttachDownstream(source.bundle->downstream->spec, source.seed);
  }
  auto from = source.bundle->NamedParameters();
  auto to = clone->NamedParameters();
  for (std::size_t i = 0; i < from.size(); ++i) to[i].second->value = from[i].second->value;
  return clone;
}

void EnsureDir(const std::filesystem::path& dir) {
  if (!dir.empty()) std::filesystem::create_directories(dir);
}

}  // namespace

json ToJson(const StepRecord& r) {
  json j = {{"epoch", r.epoch}, {"step", r.step}, {"total", r.report.total}};
  for (const auto& [name, field] : kFields) {
    if (const auto& v = r.report.components.*field) j[name] = *v;
  }
  return j;
}

StepRecord StepRecordFromJson(const json& j) {
  StepRecord r;
  r.epoch = j.at("epoch").get<std::size_t>();
  r.step = j.at("step").get<std::size_t>();
  r.report.total = j.at("total").get<double>();
  for (const auto& [name, field] : kFields) {
    if (j.contains(name)) r.report.components.*field = j.at(name).get<double>();
  }
  return r;
}

json ToJson(const RepresentationEpoch& e) {
  json j = {{"epoch", e.epoch},
            {"total", e.total},
            {"validation_loss", e.validation_loss},
            {"seconds", e.seconds}};
  for (const auto& [name, field] : kFields) {
    if (const auto& v = e.mean.*field) j[name] = *v;
  }
  return j;
}

json ToJson(const DownstreamEpoch& e) {
  json j = {{"epoch", e.epoch},
            {"task", e.task},
            {"validation", metrics::ToJson(e.validation)},
            {"seconds", e.seconds}};
  if (e.adversary) j["adversary"] = *e.adversary;
  return j;
}

// Representation phase -------------------------------------------------------

RepresentationResult TrainRepresentation(const exp::ExperimentConfig& config,
                                         const data::DatasetSplits& splits,
                                         const TrainOptions& options) {
  const exp::ActiveTerms terms = exp::VariantLossMask(config);
  const auto& schedule = config.schedule;
  const auto& w = config.weights;
  const std::uint64_t seed = schedule.seed;
  const std::size_t batch_size = schedule.batch_size;

  if (splits.train.size() < batch_size) {
    throw TrainingError("DataExhausted",
                        "train split has " + std::to_string(splits.train.size()) +
                            " samples, fewer than one batch of " + std::to_string(batch_size));
  }

  RepresentationResult result{NewCheckpoint(config, seed), {}, {}};
  Checkpoint& ck = result.checkpoint;
  model::ModelBundle& b = *ck.bundle;
  const auto& layout = terms.layout;

  const nn::AdamOptions adam{schedule.repr_lr, schedule.beta1, schedule.beta2, 1e-8};
  const Params autoencoder = Concat({b.encoder.Parameters(), b.decoder.Parameters(),
                                     HeadParams(b.target_head), HeadParams(b.protected_head)});
  const Params adversaries = Concat({HeadParams(b.adv_protected), HeadParams(b.adv_target)});
  const Params discriminator = b.discriminator ? b.discriminator->Parameters() : Params{};
  nn::Adam<float> main_opt(autoencoder, adam);
  nn::AdamOptions adversary_adam = adam;
  adversary_adam.learning_rate *= schedule.adversary_lr_scale;
  nn::Adam<float> adv_opt(adversaries, adversary_adam);
  nn::Adam<float> disc_opt(discriminator, adam);

  RandomEngine noise_rng = MakeEngine(seed, Stream::kNoise);
  RandomEngine shuffle_rng = MakeEngine(seed, Stream::kShuffle);
  data::BatchStream stream(splits.train, batch_size, seed, /*drop_last=*/true);

  const auto& dir = options.run_dir;
  if (!dir.empty()) {
    EnsureDir(dir / "logs");
    EnsureDir(dir / "checkpoints");
  }
  JsonLines step_log(dir.empty() ? dir : dir / "logs" / "repr_steps.jsonl");
  JsonLines epoch_log(dir.empty() ? dir : dir / "logs" / "repr_epochs.jsonl");

  std::size_t step = 0;
  bool stop = false;
  for (std::size_t epoch = 0; epoch < schedule.repr_epochs && !stop; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    stream.StartEpoch(epoch);
    std::vector<StepRecord> epoch_records;

    while (stream.HasNext()) {
      const data::LabeledImageBatch batch = stream.Next();
      const std::size_t bsz = batch.size();
      const loss::Labels y_t(batch.target_labels), y_p(batch.protected_labels);
      loss::LossComponents c;

      main_opt.ZeroGrad();
      adv_opt.ZeroGrad();

      const model::GaussianPosterior post = b.encoder.Forward(batch.images);
      const Tensor eps = StandardNormal({bsz, model::kLatentDim}, noise_rng);
      const Tensor z = model::SampleLatent(post, eps);
      const Tensor x_hat = b.decoder.Forward(z);

      const auto recon = loss::ReconstructionLoss(batch.images, x_hat);
      const auto kl = loss::KlDivergence(post.mu, post.log_var);
      c.recon = recon.value;
      c.kl = kl.value;
      Tensor dz = b.decoder.Backward(recon.grad);

      if (terms.tc) {
        const Tensor logits = b.discriminator->Forward(z);
        auto tc = loss::TcLoss(logits);
        c.tc = tc.value;
        tc.grad.Scale(static_cast<float>(w.alpha));
        dz += b.discriminator->Backward(tc.grad);
      }
      auto classify = [&](model::ClassifierHead& head, const std::string& block,
                          loss::Labels labels) {
        auto bce = loss::BinaryCrossEntropy(head.Forward(Block(z, layout, block)), labels);
        bce.grad.Scale(static_cast<float>(w.beta));
        AccumulateBlock(dz, layout, block, head.Backward(bce.grad));
        return bce.value;
      };
      if (terms.cls_t) c.cls_t = classify(*b.target_head, terms.target_block, y_t);
      if (terms.cls_p) c.cls_p = classify(*b.protected_head, terms.protected_block, y_p);
      if (terms.adv) {
        const Tensor logit_p_adv = b.adv_protected->Forward(Block(z, layout, "TAL"));
        const Tensor logit_t_adv = b.adv_target->Forward(Block(z, layout, "PAL"));
        const auto adv = loss::DecorrelationAdvLoss(logit_p_adv, y_p, logit_t_adv, y_t);
        c.adv_p = -adv.protected_from_target;
        c.adv_t = -adv.target_from_protected;
        // Heads descend on their own cross-entropy; the encoder receives the
        // reversed input gradient.
        Tensor into_tal = b.adv_protected->Backward(adv.adversary_grad_p);
        Tensor into_pal = b.adv_target->Backward(adv.adversary_grad_t);
        into_tal = loss::ReverseGradient(into_tal, static_cast<float>(w.gamma));
        into_pal = loss::ReverseGradient(into_pal, static_cast<float>(w.gamma));
        AccumulateBlock(dz, layout, "TAL", into_tal);
        AccumulateBlock(dz, layout, "PAL", into_pal);
      }

      loss::LossReport report;
      try {
        report = loss::TotalRepresentationLoss(c, w);
      } catch (const Error& e) {
        throw TrainingError("NonFiniteLoss", "epoch " + std::to_string(epoch) + " step " +
                                                 std::to_string(step) + ": " + e.what());
      }

      const float klw = static_cast<float>(terms.kl_weight);
      Tensor grad_mu(post.mu.shape()), grad_lv(post.mu.shape());
      for (std::size_t i = 0; i < dz.size(); ++i) {
        grad_mu[i] = dz[i] + klw * kl.grad_mu[i];
        grad_lv[i] = dz[i] * eps[i] * 0.5f * std::exp(0.5f * post.log_var[i]) +
                     klw * kl.grad_log_var[i];
      }
      b.encoder.Backward(grad_mu, grad_lv);

      std::uint64_t frozen = 0;
      if (options.isolation_checks) frozen = model::ParameterDigest(Concat({adversaries, discriminator}));
      main_opt.Step();
      if (options.isolation_checks) {
        RequireIsolation(frozen, Concat({adversaries, discriminator}),
                         "encoder step changed adversary or discriminator parameters");
        frozen = model::ParameterDigest(Concat({autoencoder, discriminator}));
      }
      if (terms.adv) {
        adv_opt.Step();
        const Tensor tal = Block(z, layout, "TAL"), pal = Block(z, layout, "PAL");
        for (std::size_t k = 1; k < schedule.adversary_steps; ++k) {
          adv_opt.ZeroGrad();
          const auto adv = loss::DecorrelationAdvLoss(b.adv_protected->Forward(tal), y_p,
                                                      b.adv_target->Forward(pal), y_t);
          b.adv_protected->Backward(adv.adversary_grad_p);
          b.adv_target->Backward(adv.adversary_grad_t);
          adv_opt.Step();
        }
      }
      if (options.isolation_checks) {
        RequireIsolation(frozen, Concat({autoencoder, discriminator}),
                         "adversary step changed encoder or discriminator parameters");
        frozen = model::ParameterDigest(Concat({autoencoder, adversaries}));
      }

      if (terms.discriminator) {
        disc_opt.ZeroGrad();
        const Tensor fake = model::ShuffleSubspaces(z, layout, shuffle_rng);
        const Tensor logits = b.discriminator->Forward(StackRows(z, fake));
        const auto d = loss::DiscriminatorLoss(RowRange(logits, 0, bsz),
                                               RowRange(logits, bsz, bsz));
        if (!std::isfinite(d.value)) {
          throw TrainingError("NonFiniteLoss", "discriminator loss is not finite");
        }
        b.discriminator->Backward(StackRows(d.grad_real, d.grad_fake));
        disc_opt.Step();
        report.components.disc = d.value;
      }
      if (options.isolation_checks) {
        RequireIsolation(frozen, Concat({autoencoder, adversaries}),
                         "discriminator step changed encoder or head parameters");
      }

      StepRecord record{epoch, step, report};
      step_log.Write(ToJson(record));
      if (options.on_step) options.on_step(record);
      result.log.push_back(record);
      epoch_records.push_back(record);
      ++step;
      if (options.max_steps && step >= options.max_steps) {
        stop = true;
        break;
      }
    }
    RequireFinite(autoencoder);
    RequireFinite(discriminator);
    RequireFinite(adversaries);

    RepresentationEpoch summary;
    summary.epoch = epoch;
    for (const auto& [name, field] : kFields) {
      if (!(epoch_records.front().report.components.*field)) continue;
      double sum = 0;
      for (const auto& r : epoch_records) sum += *(r.report.components.*field);
      summary.mean.*field = sum / double(epoch_records.size());
    }
    for (const auto& r : epoch_records) summary.total += r.report.total;
    summary.total /= double(epoch_records.size());
    ck.epoch = epoch + 1;
    ck.log_digest = step_log.digest();
    summary.validation_loss =
        splits.validation.empty() ? 0.0 : ValidationLoss(ck, splits.validation);
    summary.seconds = Seconds(epoch_start);
    result.epochs.push_back(summary);
    epoch_log.Write(ToJson(summary));
    step_log.Flush();
    epoch_log.Flush();
    if (!dir.empty()) SaveCheckpoint(dir / "checkpoints" / "repr_latest.ckpt", ck);

    if (options.progress) {
      auto& out = *options.progress;
      out << "repr epoch " << epoch + 1 << "/" << schedule.repr_epochs << std::fixed
          << std::setprecision(4) << "  total " << summary.total << "  recon "
          << *summary.mean.recon << "  kl " << *summary.mean.kl;
      if (summary.mean.tc) out << "  tc " << *summary.mean.tc;
      if (summary.mean.disc) out << "  disc " << *summary.mean.disc;
      if (summary.mean.cls_t) out << "  cls_t " << *summary.mean.cls_t;
      if (summary.mean.cls_p) out << "  cls_p " << *summary.mean.cls_p;
      if (summary.mean.adv_p) out << "  adv_p " << *summary.mean.adv_p;
      out << "  val " << summary.validation_loss << std::setprecision(1) << "  ("
          << summary.seconds << "s)" << std::defaultfloat << std::endl;
    }
  }
  if (!dir.empty()) SaveCheckpoint(dir / "checkpoints" / "repr_final.ckpt", ck);
  return result;
}

// Inference -------------------------------------------------------------------

Embedding EmbedDataset(const Checkpoint& checkpoint, const data::Dataset& dataset,
                       std::size_t batch_size) {
  if (!checkpoint.bundle) throw DataError("IncompatibleCheckpoint", "checkpoint has no model");
  const std::size_t n = dataset.size();
  Embedding e{Tensor({n, model::kLatentDim}), Tensor({n, model::kLatentDim}),
              dataset.target_labels(), dataset.protected_labels()};
  for (std::size_t start = 0; start < n; start += batch_size) {
    std::vector<std::size_t> rows(std::min(batch_size, n - start));
    std::iota(rows.begin(), rows.end(), start);
    const auto batch = data::MakeBatch(dataset, rows);
    const auto post = checkpoint.bundle->encoder.Forward(batch.images);
    std::copy_n(post.mu.data(), post.mu.size(), e.mu.data() + start * model::kLatentDim);
    std::copy_n(post.log_var.data(), post.log_var.size(),
                e.log_var.data() + start * model::kLatentDim);
  }
  return e;
}

double ValidationLoss(const Checkpoint& checkpoint, const data::Dataset& dataset,
                      std::size_t batch_size) {
  auto& b = *checkpoint.bundle;
  const double klw = checkpoint.config.weights.kl_beta;
  double sum = 0;
  const std::size_t n = dataset.size();
  for (std::size_t start = 0; start < n; start += batch_size) {
    std::vector<std::size_t> rows(std::min(batch_size, n - start));
    std::iota(rows.begin(), rows.end(), start);
    const auto batch = data::MakeBatch(dataset, rows);
    const auto post = b.encoder.Forward(batch.images);
    const Tensor x_hat = b.decoder.Forward(post.mu);
    const double recon = loss::ReconstructionLoss(batch.images, x_hat).value;
    const double kl = loss::KlDivergence(post.mu, post.log_var).value;
    sum += (recon + klw * kl) * double(rows.size());
  }
  return sum / double(n);
}

std::vector<std::size_t> SelectRemovalLatents(const Tensor& table,
                                              std::span<const std::uint8_t> labels,
                                              std::size_t k) {
  if (k != 1 && k != 2) throw ConfigError("InvalidRemovalCount", "k must be 1 or 2");
  if (table.rank() != 2 || table.dim(0) != labels.size()) {
    throw DataError("LengthMismatch", "latent table rows must match the label count");
  }
  if (!table.AllFinite()) throw DataError("NonFiniteTable", "latent table is not finite");
  const std::size_t n = table.dim(0), d = table.dim(1);
  if (k > d) throw DataError("LengthMismatch", "fewer columns than requested");
  double label_mean = 0;
  for (auto y : labels) label_mean += y;
  label_mean /= double(n);
  double label_var = 0;
  for (auto y : labels) label_var += (y - label_mean) * (y - label_mean);
  if (n == 0 || label_var == 0) {
    throw DataError("DegenerateColumn", "all protected labels are identical");
  }

  std::vector<double> score(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += table.at(i, j);
    mean /= double(n);
    double cov = 0, var = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = table.at(i, j) - mean;
      cov += x * (labels[i] - label_mean);
      var += x * x;
    }
    score[j] = var > 0 ? std::abs(cov / std::sqrt(var * label_var)) : 0.0;
  }
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  order.resize(k);
  return order;
}

namespace {

// Task-head input and, when the bundle has a transform, f(z_m).
struct TaskInput {
  Tensor input;
  Tensor z_m;
  Tensor f_zm;
};

TaskInput BuildTaskInput(const Checkpoint& ck, const model::LatentLayout& layout,
                         const Tensor& z) {
  auto& ds = *ck.bundle->downstream;
  const auto kind = ck.config.ablation.downstream_input;
  TaskInput t;
  if (ds.transform) {
    t.z_m = Block(z, layout, "MAL");
    t.f_zm = ds.transform->Forward(t.z_m);
    t.input = exp::DownstreamInputVector(kind, layout, z, ck.removed_dims, &t.f_zm);
  } else {
    t.input = exp::DownstreamInputVector(kind, layout, z, ck.removed_dims);
  }
  return t;
}

std::vector<std::uint8_t> Threshold(const Tensor& logits) {
  std::vector<std::uint8_t> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] > 0.0f;
  return out;
}

}  // namespace

std::vector<std::uint8_t> Predict(const Checkpoint& checkpoint, const Embedding& embedding) {
  if (!checkpoint.has_downstream()) {
    throw DataError("IncompatibleCheckpoint", "checkpoint has no downstream classifier");
  }
  const auto layout = exp::VariantLossMask(checkpoint.config).layout;
  const TaskInput t = BuildTaskInput(checkpoint, layout, embedding.mu);
  return Threshold(checkpoint.bundle->downstream->task.Forward(t.input));
}

// Downstream phase ------------------------------------------------------------

DownstreamResult TrainDownstream(const exp::ExperimentConfig& config,
                                 const Checkpoint& representation,
                                 const data::DatasetSplits& splits,
                                 const TrainOptions& options) {
  config.Validate();
  if (!representation.bundle ||
      representation.bundle->spec() != exp::ModelSpecFor(config)) {
    throw DataError("IncompatibleCheckpoint",
                    "representation checkpoint was trained for a different architecture (" +
                        representation.config.variant_id() + " vs " + config.variant_id() +
                        ")");
  }
  const auto& schedule = config.schedule;
  const std::uint64_t seed = schedule.seed;
  const auto layout = exp::VariantLossMask(config).layout;

  DownstreamResult result;
  Checkpoint& ck = result.checkpoint;
  ck.config = config;
  ck.config_hash = exp::ConfigHash(config);
  ck.seed = representation.seed;
  ck.phase = "downstream";
  ck.log_digest = representation.log_digest;
  ck.bundle = CloneBundle(representation);
  ck.bundle->downstream.reset();
  ck.bundle->AttachDownstream(exp::DownstreamSpecFor(config), representation.seed);
  auto& ds = *ck.bundle->downstream;

  const Params encoder_params = ck.bundle->encoder.Parameters();
  const std::uint64_t encoder_digest = model::ParameterDigest(encoder_params);

  const Embedding train = EmbedDataset(ck, splits.train);
  const Embedding validation = EmbedDataset(ck, splits.validation);
  const auto kind = config.ablation.downstream_input;
  if (kind == exp::DownstreamInput::kLatentRemovalK1 ||
      kind == exp::DownstreamInput::kLatentRemovalK2) {
    ck.removed_dims = SelectRemovalLatents(train.mu, train.protected_labels,
                                           kind == exp::DownstreamInput::kLatentRemovalK1 ? 1 : 2);
  }

  const nn::AdamOptions adam{schedule.downstream_lr, schedule.beta1, schedule.beta2, 1e-8};
  Params task_params = ds.task.Parameters();
  if (ds.transform) {
    const auto f = ds.transform->Parameters();
    task_params.insert(task_params.end(), f.begin(), f.end());
  }
  nn::Adam<float> task_opt(task_params, adam);
  nn::Adam<float> adv_opt(ds.adversary ? ds.adversary->Parameters() : Params{}, adam);
  RandomEngine noise_rng = MakeEngine(seed, Stream::kDownstreamNoise);

  const auto& dir = options.run_dir;
  if (!dir.empty()) {
    EnsureDir(dir / "logs");
    EnsureDir(dir / "checkpoints");
  }
  JsonLines epoch_log(dir.empty() ? dir : dir / "logs" / "downstream_epochs.jsonl");

  std::vector<Tensor> best;
  double best_score = -1;
  const std::size_t n = train.mu.dim(0);
  for (std::size_t epoch = 0; epoch < schedule.downstream_epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    double task_sum = 0, adv_sum = 0;
    std::size_t steps = 0;
    for (const auto& rows : data::EpochBatches(n, schedule.batch_size, seed,
                                               kDownstreamEpochOffset + epoch, false)) {
      const Tensor mu = GatherRows(train.mu, rows);
      const Tensor lv = GatherRows(train.log_var, rows);
      const Tensor eps = StandardNormal(mu.shape(), noise_rng);
      const Tensor z = model::SampleLatent({mu, lv}, eps);
      std::vector<std::uint8_t> y_t(rows.size()), y_p(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        y_t[i] = train.target_labels[rows[i]];
        y_p[i] = train.protected_labels[rows[i]];
      }

      task_opt.ZeroGrad();
      adv_opt.ZeroGrad();
      const TaskInput t = BuildTaskInput(ck, layout, z);
      const Tensor logit_task = ds.task.Forward(t.input);
      if (ds.transform) {
        const Tensor logit_adv = ds.adversary->Forward(t.f_zm);
        const auto r = loss::DownstreamLoss(logit_task, y_t, logit_adv, y_p);
        if (!std::isfinite(r.task) || !std::isfinite(r.adversary)) {
          throw TrainingError("NonFiniteLoss", "downstream loss is not finite");
        }
        // The task input is z_t + f(z_m), so d's input gradient reaches f
        // unchanged; d~'s input gradient reaches f reversed.
        Tensor into_f = ds.task.Backward(r.grad_task_logit);
        into_f.AddScaled(ds.adversary->Backward(r.grad_adversary_logit), -1.0f);
        ds.transform->Backward(into_f);
        task_sum += r.task;
        adv_sum += r.adversary;
      } else {
        const auto r = loss::BinaryCrossEntropy(logit_task, y_t);
        if (!std::isfinite(r.value)) {
          throw TrainingError("NonFiniteLoss", "downstream loss is not finite");
        }
        ds.task.Backward(r.grad);
        task_sum += r.value;
      }
      task_opt.Step();
      if (ds.adversary) adv_opt.Step();
      ++steps;
    }
    RequireFinite(task_params);

    DownstreamEpoch summary;
    summary.epoch = epoch;
    summary.task = task_sum / double(steps);
    if (ds.adversary) summary.adversary = adv_sum / double(steps);
    const auto predictions = Predict(ck, validation);
    summary.validation = metrics::Evaluate(metrics::ComputeGroupConfusion(
        predictions, validation.target_labels, validation.protected_labels));
    summary.seconds = Seconds(epoch_start);
    result.epochs.push_back(summary);
    epoch_log.Write(ToJson(summary));
    epoch_log.Flush();

    if (summary.validation.equalized_accuracy > best_score) {
      best_score = summary.validation.equalized_accuracy;
      result.best_epoch = epoch;
      best.clear();
      for (auto& [name, p] : ck.bundle->NamedParameters()) {
        if (name.rfind("downstream", 0) == 0) best.push_back(p->value);
      }
    }
    if (options.progress) {
      *options.progress << "downstream epoch " << epoch + 1 << "/"
                        << schedule.downstream_epochs << std::fixed << std::setprecision(4)
                        << "  task " << summary.task;
      if (summary.adversary) *options.progress << "  adversary " << *summary.adversary;
      *options.progress << "  val acc " << summary.validation.accuracy << "  val eacc "
                        << summary.validation.equalized_accuracy << "  val eodds "
                        << summary.validation.equalized_odds << std::defaultfloat
                        << std::endl;
    }
  }

  std::size_t k = 0;
  for (auto& [name, p] : ck.bundle->NamedParameters()) {
    if (name.rfind("downstream", 0) == 0) p->value = best[k++];
  }
  ck.epoch = result.best_epoch + 1;
  if (model::ParameterDigest(encoder_params) != encoder_digest) {
    throw InternalError("EncoderNotFrozen", "encoder parameters changed during downstream training");
  }
  if (!dir.empty()) SaveCheckpoint(dir / "checkpoints" / "downstream_best.ckpt", ck);
  return result;
}

}  // namespace fdvae::train
