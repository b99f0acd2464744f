// Copyright 2026 The dfkd Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// dfkd: command-line driver for teacher training, distillation, sweeps and
// reports.
//
// Exit codes: 0 success, 1 unexpected failure, 2 bad configuration or
// arguments, 3 dataset I/O failure, 4 missing teacher checkpoint, 5 no
// completed runs to report on.

#include <torch/torch.h>

#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dfkd/config.hpp"
#include "dfkd/data.hpp"
#include "dfkd/errors.hpp"
#include "dfkd/experiment.hpp"

namespace {

namespace fs = std::filesystem;
using namespace dfkd;

enum Exit : int {
  kOk = 0,
  kFailure = 1,
  kBadConfig = 2,
  kDataIo = 3,
  kNoTeacher = 4,
  kNoRuns = 5,
};

struct Common {
  std::string config_path;
  std::string workspace = "workspace";
  std::optional<std::uint64_t> seed;
  bool force = false;
  std::string data_root;
  std::vector<std::string> overrides;
};

// Thrown to unwind with a specific exit code after printing a message.
struct ExitWith {
  int code;
};

void fail(int code, const std::string& message) {
  std::cerr << "dfkd: " << message << "\n";
  throw ExitWith{code};
}

config::ExperimentConfig load_config(const Common& c) {
  try {
    auto cfg = c.config_path.empty() ? config::parse("") : config::load(c.config_path);
    for (const auto& o : c.overrides) config::apply_override(cfg, o);
    if (c.seed) cfg.train.seed = *c.seed;
    training::validate(cfg.train);
    return cfg;
  } catch (const ConfigError& e) {
    fail(kBadConfig, fmt::format("{}: {}", c.config_path.empty() ? "<defaults>" : c.config_path,
                                 e.what()));
  } catch (const IoError& e) {
    fail(kBadConfig, e.what());
  } catch (const InvalidArgument& e) {
    fail(kBadConfig, e.what());
  }
  return {};
}

data::DatasetSplits load_data(const Common& c, data::DatasetKind kind) {
  std::optional<fs::path> root;
  if (!c.data_root.empty()) root = fs::path(c.data_root);
  const auto dir = data::resolve_data_root(kind, root);
  try {
    return data::load_dataset(kind, dir);
  } catch (const IoError& e) {
    fail(kDataIo, fmt::format("cannot load {} from {}: {}", data::to_string(kind), dir.string(),
                              e.what()));
  } catch (const FormatError& e) {
    fail(kDataIo, fmt::format("cannot load {} from {}: {}", data::to_string(kind), dir.string(),
                              e.what()));
  }
  return {};
}

void add_common(CLI::App* cmd, Common& c, bool needs_config) {
  auto* opt = cmd->add_option("--config", c.config_path, "Experiment config file");
  if (needs_config) opt->required();
  cmd->add_option("--workspace", c.workspace, "Workspace directory")->capture_default_str();
  cmd->add_option("--seed", c.seed, "Override the configured seed");
  cmd->add_flag("--force", c.force, "Redo runs that are already complete");
  cmd->add_option("--data-root", c.data_root,
                  std::string("Dataset directory (default: $") + data::kDataRootEnv +
                      " or data/<dataset>)");
  cmd->add_option("--set", c.overrides, "Override a config field, e.g. --set training.eta_g=0.005");
}

int cmd_train_teacher(const Common& c) {
  const auto cfg = load_config(c);
  const auto splits = load_data(c, cfg.train.dataset);
  experiment::Workspace ws(c.workspace);
  const auto t = experiment::ensure_teacher(ws, cfg.train, splits, c.force, &std::cout);
  std::cout << fmt::format("teacher {} test accuracy {:.4f}{}\n",
                           experiment::teacher_id_for(cfg.train), t.accuracy,
                           t.reused ? " (reused)" : "");
  return kOk;
}

int cmd_distill(const Common& c) {
  const auto cfg = load_config(c);
  experiment::Workspace ws(c.workspace);
  try {
    experiment::load_teacher(ws, cfg.train);
  } catch (const experiment::MissingTeacher& e) {
    fail(kNoTeacher, e.what());
  }
  const auto splits = load_data(c, cfg.train.dataset);
  const auto run = experiment::distill(ws, cfg, splits.test, c.force, &std::cout);
  std::cout << fmt::format("{} accuracy {:.4f} report {}\n", run.manifest.run_id,
                           run.report.accuracy,
                           (ws.run_dir(run.manifest.run_id) / "report.json").string());
  return kOk;
}

int cmd_sweep(const Common& c, const std::string& axis_name, const std::vector<double>& values) {
  if (values.empty()) fail(kBadConfig, "sweep needs at least one value (--values)");
  experiment::SweepAxis axis{};
  try {
    axis = experiment::parse_sweep_axis(axis_name);
  } catch (const InvalidArgument& e) {
    fail(kBadConfig, e.what());
  }
  const auto cfg = load_config(c);
  experiment::Workspace ws(c.workspace);
  try {
    experiment::load_teacher(ws, cfg.train);
  } catch (const experiment::MissingTeacher& e) {
    fail(kNoTeacher, e.what());
  }
  const auto splits = load_data(c, cfg.train.dataset);
  experiment::SweepOutcome out;
  try {
    out = experiment::sweep(ws, cfg, axis, values, splits.test, c.force, &std::cout);
  } catch (const InvalidArgument& e) {
    fail(kBadConfig, e.what());
  }
  std::ifstream csv(out.csv_path);
  std::cout << csv.rdbuf();
  std::cout << "wrote " << out.csv_path.string() << "\n";
  return kOk;
}

int cmd_report(const Common& c, const std::string& out_dir) {
  experiment::Workspace ws(c.workspace);
  const fs::path out = out_dir.empty() ? ws.root() / "report" : fs::path(out_dir);
  try {
    const auto files = experiment::render_report(ws, out);
    for (const auto& f : files) std::cout << f.string() << "\n";
  } catch (const experiment::NoCompletedRuns& e) {
    fail(kNoRuns, e.what());
  } catch (const experiment::MissingTeacher& e) {
    fail(kNoTeacher, e.what());
  }
  return kOk;
}

int cmd_evaluate(const Common& c, const std::string& run_id) {
  experiment::Workspace ws(c.workspace);
  const auto manifest = ws.find_run(run_id);
  if (!manifest) fail(kBadConfig, "no run named " + run_id + " in " + c.workspace);
  const auto splits = load_data(c, manifest->config.train.dataset);
  experiment::MetricReport r;
  try {
    r = experiment::evaluate_run(ws, run_id, splits.test);
  } catch (const experiment::MissingTeacher& e) {
    fail(kNoTeacher, e.what());
  }
  std::cout << fmt::format("run {}\nmethod {}\naccuracy {}\nis {}\nfid {}\ndiversity {}\n", run_id,
                           r.method, r.accuracy, r.is, r.fid, r.diversity);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  CLI::App app{"Data-free knowledge distillation toolkit"};
  app.require_subcommand(1);

  Common common;
  auto* teacher = app.add_subcommand("train-teacher", "Train and store the teacher classifier");
  add_common(teacher, common, true);

  auto* distill = app.add_subcommand("distill", "Train a generator, then distill a student");
  add_common(distill, common, true);

  std::string axis;
  std::vector<double> values;
  auto* sweep = app.add_subcommand("sweep", "Run distill over a list of values for one field");
  add_common(sweep, common, true);
  sweep->add_option("--axis", axis, "eta_g, tau or generator_epochs")->required();
  sweep->add_option("--values", values, "Comma-separated values")->delimiter(',');

  std::string out_dir;
  auto* report = app.add_subcommand("report", "Render CSVs, grids and a summary of all runs");
  add_common(report, common, false);
  report->add_option("--out", out_dir, "Output directory (default: <workspace>/report)");

  std::string run_id;
  auto* evaluate = app.add_subcommand("evaluate", "Recompute the metrics of a completed run");
  add_common(evaluate, common, false);
  evaluate->add_option("--run-id", run_id, "Run to evaluate")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kBadConfig;
  }

  try {
    if (*teacher) return cmd_train_teacher(common);
    if (*distill) return cmd_distill(common);
    if (*sweep) return cmd_sweep(common, axis, values);
    if (*report) return cmd_report(common, out_dir);
    if (*evaluate) return cmd_evaluate(common, run_id);
  } catch (const ExitWith& e) {
    return e.code;
  } catch (const experiment::MissingTeacher& e) {
    std::cerr << "dfkd: " << e.what() << "\n";
    return kNoTeacher;
  } catch (const std::exception& e) {
    std::cerr << "dfkd: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
