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

// fdvae: data preparation, training, evaluation, experiment matrices and
// reports.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fdvae/checkpoint.hpp"
#include "fdvae/config.hpp"
#include "fdvae/datasets.hpp"
#include "fdvae/error.hpp"
#include "fdvae/experiments.hpp"
#include "fdvae/metrics.hpp"
#include "fdvae/report.hpp"
#include "fdvae/trainer.hpp"

namespace fs = std::filesystem;
using namespace fdvae;

namespace {

struct Common {
  std::string config;
  std::string variant = "fdvae";
  std::vector<std::string> overrides;
  std::string out;
  int verbosity = 0;
};

void AddConfigFlags(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Experiment config file (JSON)");
  cmd->add_option("--variant", c.variant,
                  "Desk-scale defaults to start from when --config is absent");
  cmd->add_option("--set", c.overrides, "Override a config key: dotted.key=value")
      ->take_all();
}

exp::ExperimentConfig ResolveConfig(const Common& c) {
  exp::ExperimentConfig config = c.config.empty()
                                     ? exp::DeskScaleConfig(exp::ParseVariant(c.variant))
                                     : exp::LoadConfig(c.config);
  config = exp::ApplyOverrides(config, c.overrides);
  config.Validate();
  return config;
}

void PrintConfig(const exp::ExperimentConfig& config) {
  std::cout << "resolved config (" << exp::ConfigHash(config) << "):\n"
            << exp::ToJson(config).dump(2) << std::endl;
}

std::ostream* Progress(const Common& c) { return c.verbosity > 0 ? &std::cout : nullptr; }

void PrintRow(const exp::ResultRow& row) {
  std::cout << metrics::FormatReportHeader() << '\n'
            << metrics::FormatReportRow(row.variant_id + " s" + std::to_string(row.seed),
                                        row.report)
            << std::endl;
}

// Runs every (config, seed) pair on `jobs` threads; per-run progress is
// buffered and printed when the run finishes.
std::vector<exp::ResultRow> RunMatrix(const std::vector<exp::ExperimentConfig>& configs,
                                      const Common& c, int jobs) {
  struct Task {
    const exp::ExperimentConfig* config;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (const auto& config : configs) {
    for (std::uint64_t seed : config.seeds) tasks.push_back({&config, seed});
  }
  std::vector<data::DatasetSplits> splits;
  std::vector<std::string> split_ids;
  std::vector<std::size_t> split_of;
  for (const auto& config : configs) {
    const std::string id = exp::ToJson(config)["dataset"].dump();
    std::size_t k = 0;
    while (k < split_ids.size() && split_ids[k] != id) ++k;
    if (k == split_ids.size()) {
      split_ids.push_back(id);
      splits.push_back(exp::LoadSplits(config.dataset));
    }
    split_of.push_back(k);
  }

  std::vector<std::optional<exp::ResultRow>> rows(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex out_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      std::ostringstream log;
      exp::RunOptions options;
      options.output_root = c.out;
      options.progress = c.verbosity > 0 ? &log : nullptr;
      const std::size_t config_index = std::size_t(tasks[i].config - configs.data());
      try {
        rows[i] = exp::RunSeed(*tasks[i].config, tasks[i].seed, splits[split_of[config_index]],
                               options);
      } catch (...) {
        errors[i] = std::current_exception();
      }
      std::lock_guard lock(out_mutex);
      std::cout << log.str();
      if (rows[i]) PrintRow(*rows[i]);
      std::cout.flush();
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < jobs; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<exp::ResultRow> out;
  for (auto& r : rows) out.push_back(std::move(*r));
  return out;
}

void PrintAndWriteReport(const std::vector<exp::ResultRow>& rows, const Common& c) {
  std::vector<fs::path> dirs;
  for (const auto& r : rows) {
    dirs.push_back(fs::path(c.out) / (r.config_hash + "-s" + std::to_string(r.seed)));
  }
  const auto report = report::WriteReport(dirs, fs::path(c.out) / "report");
  std::cout << report.table.Format() << "report: " << (fs::path(c.out) / "report").string()
            << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FD-VAE: fairness-aware disentangling VAE training and evaluation", "fdvae"};
  app.require_subcommand(1);
  app.fallthrough();
  Common c;
  const char* env_out = std::getenv("FDVAE_OUTPUT_ROOT");
  c.out = env_out && *env_out ? env_out : "runs";
  app.add_option("--out", c.out, "Output root (default $FDVAE_OUTPUT_ROOT or runs)");
  app.add_flag("-v,--verbose", c.verbosity, "Print per-epoch progress");

  // prepare-data
  auto* prepare = app.add_subcommand("prepare-data", "Write a dataset root to --dest");
  std::string kind = "synthetic", raw, dest;
  prepare->add_option("--kind", kind, "synthetic or utkface")
      ->check(CLI::IsMember({"synthetic", "utkface"}));
  prepare->add_option("--raw", raw, "UTKFace image directory (utkface)");
  prepare->add_option("--dest", dest, "Dataset root to write")->required();
  AddConfigFlags(prepare, c);

  // train-repr
  auto* train_repr = app.add_subcommand("train-repr", "Representation phase for one seed");
  std::uint64_t seed = 0;
  bool isolation = false;
  train_repr->add_option("--seed", seed, "Training seed");
  train_repr->add_flag("--isolation-checks", isolation,
                       "Verify optimizer parameter isolation every step");
  AddConfigFlags(train_repr, c);

  // train-downstream
  auto* train_down = app.add_subcommand(
      "train-downstream", "Downstream phase on a representation checkpoint, then evaluate");
  std::string checkpoint;
  train_down->add_option("--checkpoint", checkpoint, "Representation checkpoint")->required();
  train_down->add_option("--set", c.overrides,
                         "Override a key of the checkpoint's config: dotted.key=value")
      ->take_all();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Fairness metrics of prediction logs");
  std::vector<std::string> predictions;
  bool json_out = false;
  evaluate->add_option("--predictions", predictions,
                       "Prediction log CSV (sample_id,prediction,target,protected)")
      ->required()
      ->take_all();
  evaluate->add_flag("--json", json_out, "Print JSON instead of a table");

  // run-matrix
  auto* matrix = app.add_subcommand("run-matrix", "Every seed of one or more configs");
  std::vector<std::string> configs;
  int jobs = 1;
  matrix->add_option("--config", configs, "Experiment config files")->required()->take_all();
  matrix->add_option("--set", c.overrides, "Override applied to every config")->take_all();
  matrix->add_option("--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);

  // ablate
  auto* ablate = app.add_subcommand("ablate", "The six ablation rows over every seed");
  AddConfigFlags(ablate, c);
  ablate->add_option("--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);

  // export-embeddings
  auto* embed = app.add_subcommand("export-embeddings",
                                   "Subspace embeddings and their 2-D projection");
  std::string split = "test", embed_dest;
  embed->add_option("--checkpoint", checkpoint, "Checkpoint to embed with")->required();
  embed->add_option("--split", split, "train, validation or test")
      ->check(CLI::IsMember({"train", "validation", "test"}));
  embed->add_option("--dest", embed_dest, "Output directory (default: next to checkpoint)");

  // report
  auto* report_cmd = app.add_subcommand("report", "Tables and plots from run directories");
  std::vector<std::string> run_dirs;
  std::string report_dest;
  report_cmd->add_option("--runs", run_dirs, "Run directories")->required()->take_all();
  report_cmd->add_option("--dest", report_dest, "Output directory (default <out>/report)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string message = e.what();
    if (argc > 1 && argv[1][0] != '-') {
      bool known = false;
      for (const auto* sub : app.get_subcommands({})) known |= sub->get_name() == argv[1];
      if (!known) message = std::string("unknown subcommand '") + argv[1] + "'";
    }
    std::cerr << "ConfigError Usage: " << message << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*prepare) {
      if (kind == "utkface") {
        if (raw.empty()) throw ConfigError("MissingOption", "--raw is required for utkface");
        std::cout << "wrote " << data::PrepareUtkFace(raw, dest) << " images to " << dest
                  << std::endl;
      } else {
        const auto config = ResolveConfig(c);
        PrintConfig(config);
        if (config.dataset.kind != exp::DatasetSection::Kind::kSynthetic) {
          throw ConfigError("InconsistentConfig", "prepare-data needs a synthetic dataset");
        }
        std::cout << "wrote " << data::ExportSynthetic(config.dataset.synthetic, dest)
                  << " images to " << dest << std::endl;
      }
    } else if (*train_repr) {
      auto config = ResolveConfig(c);
      config.schedule.seed = seed;
      PrintConfig(config);
      const auto splits = exp::LoadSplits(config.dataset);
      const fs::path dir = fs::path(c.out) / exp::RunName(config, seed);
      fs::create_directories(dir);
      exp::SaveConfig(dir / "config.json", config);
      train::TrainOptions options;
      options.run_dir = dir;
      options.isolation_checks = isolation;
      options.progress = Progress(c);
      const auto result = train::TrainRepresentation(config, splits, options);
      std::cout << "checkpoint: " << (dir / "checkpoints" / "repr_final.ckpt").string()
                << "\nvalidation loss: " << result.epochs.back().validation_loss << std::endl;
    } else if (*train_down) {
      const Checkpoint representation = LoadCheckpoint(checkpoint);
      auto config = exp::ApplyOverrides(representation.config, c.overrides);
      config.schedule.seed = representation.seed;
      config.Validate();
      PrintConfig(config);
      const auto splits = exp::LoadSplits(config.dataset);
      exp::RunOptions options;
      options.output_root = c.out;
      options.progress = Progress(c);
      PrintRow(exp::RunDownstream(config, representation, splits, options));
    } else if (*evaluate) {
      nlohmann::json all = nlohmann::json::object();
      if (!json_out) std::cout << metrics::FormatReportHeader() << '\n';
      for (const auto& path : predictions) {
        const auto records = metrics::ReadPredictionLog(path);
        const auto report = metrics::Evaluate(metrics::ConfusionFromRecords(records));
        if (json_out) {
          all[path] = metrics::ToJson(report);
        } else {
          std::cout << metrics::FormatReportRow(fs::path(path).filename().string(), report)
                    << '\n';
        }
      }
      if (json_out) std::cout << all.dump(2) << '\n';
    } else if (*matrix) {
      std::vector<exp::ExperimentConfig> resolved;
      for (const auto& path : configs) {
        Common one = c;
        one.config = path;
        resolved.push_back(ResolveConfig(one));
        PrintConfig(resolved.back());
      }
      PrintAndWriteReport(RunMatrix(resolved, c, jobs), c);
    } else if (*ablate) {
      const auto base = ResolveConfig(c);
      PrintConfig(base);
      auto rows = RunMatrix(exp::AblationConfigs(base), c, jobs);
      PrintAndWriteReport(rows, c);
    } else if (*embed) {
      const Checkpoint ck = LoadCheckpoint(checkpoint);
      PrintConfig(ck.config);
      const auto splits = exp::LoadSplits(ck.config.dataset);
      const data::Dataset& dataset = split == "train"        ? splits.train
                                     : split == "validation" ? splits.validation
                                                             : splits.test;
      const fs::path out_dir =
          embed_dest.empty() ? fs::path(checkpoint).parent_path().parent_path() / "embeddings"
                             : fs::path(embed_dest);
      std::cout << "wrote " << exp::ExportEmbeddings(ck, dataset, out_dir)
                << " embedding rows to " << out_dir.string() << std::endl;
    } else if (*report_cmd) {
      std::vector<fs::path> dirs(run_dirs.begin(), run_dirs.end());
      const fs::path out_dir = report_dest.empty() ? fs::path(c.out) / "report" : fs::path(report_dest);
      const auto report = report::WriteReport(dirs, out_dir);
      std::cout << report.table.Format();
      for (const auto& f : report.files) std::cout << "wrote " << f.string() << '\n';
    }
  } catch (const Error& e) {
    std::cerr << CategoryName(e.category()) << ' ' << e.what() << std::endl;
    return ExitStatusFor(e.category());
  } catch (const std::exception& e) {
    std::cerr << "InternalError Unexpected: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
