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

#include "dfkd/experiment.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "dfkd/errors.hpp"
#include "dfkd/image_io.hpp"
#include "dfkd/metrics.hpp"
#include "dfkd/training.hpp"
#include "json.hpp"

namespace dfkd::experiment {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Write to a sibling temp file and rename, so readers never see half a file.
void write_text(const fs::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out << text;
    if (!out) throw IoError("short write to " + tmp);
  }
  fs::rename(tmp, path);
}

json parse_json_file(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void say(std::ostream* log, const std::string& line) {
  if (log) *log << line << std::endl;
}

std::string num(double v) { return fmt::format("{}", v); }

struct Models {
  models::Classifier teacher;
  models::Generator generator{nullptr};
  models::Classifier student;
};

MetricReport compute_report(const config::ExperimentConfig& cfg, const Models& m,
                            const data::Dataset& test, double accuracy) {
  const auto& t = cfg.train;
  const auto& r = cfg.run;
  const auto embedder = metrics::classifier_embedder(m.teacher);
  const auto images = metrics::generate_images(
      m.generator, r.metric_samples, training::stream_seed(t.seed, training::Stream::kMetrics));

  const auto real_n = std::min<std::int64_t>(r.metric_samples, test.size());
  const auto real = metrics::summarize(embedder.feature_fn(test.images.slice(0, 0, real_n)));
  const auto fake = metrics::summarize(embedder.feature_fn(images));

  MetricReport rep;
  rep.accuracy = accuracy;
  rep.is = metrics::inception_score(images, embedder, r.is_splits);
  rep.fid = metrics::frechet_distance(real, fake);
  rep.diversity = metrics::pairwise_diversity(images, embedder, r.diversity_pairs, t.seed);
  rep.method = std::string(training::to_string(t.method));
  rep.eta_g = t.eta_g;
  rep.tau = t.tau;
  rep.seed = t.seed;
  return rep;
}

void write_grid(const fs::path& path, const config::ExperimentConfig& cfg, const Models& m) {
  const auto grid = metrics::average_image_grid(
      m.generator, m.teacher, cfg.run.grid_samples_per_class,
      training::stream_seed(cfg.train.seed, training::Stream::kMetrics) + 1);
  image_io::write_png(path, image_io::tile(grid.means, grid.means.size(0)));
}

std::string generator_row(const training::EpochTrace& tr) {
  return fmt::format("{},{},{},{},{},,{}\n", tr.epoch, tr.mean_oh, tr.mean_ie, tr.mean_ds,
                     tr.mean_total, tr.wall_time_s);
}

std::string student_row(const training::StudentEpoch& ep) {
  return fmt::format("{},,,,{},{},{}\n", ep.epoch, ep.mean_kd, ep.accuracy, ep.wall_time_s);
}

class AppendFile {
 public:
  explicit AppendFile(const fs::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot write " + path.string());
    out_ << kTraceHeader << '\n';
    out_.flush();
  }
  void append(const std::string& line) {
    out_ << line;
    out_.flush();
  }

 private:
  std::ofstream out_;
};

}  // namespace

std::string_view to_string(RunStatus status) {
  switch (status) {
    case RunStatus::kPending:
      return "pending";
    case RunStatus::kRunning:
      return "running";
    case RunStatus::kComplete:
      return "complete";
    case RunStatus::kFailed:
      return "failed";
  }
  return "unknown";
}

RunStatus parse_run_status(std::string_view name) {
  if (name == "pending") return RunStatus::kPending;
  if (name == "running") return RunStatus::kRunning;
  if (name == "complete") return RunStatus::kComplete;
  if (name == "failed") return RunStatus::kFailed;
  throw FormatError("unknown run status '" + std::string(name) + "'");
}

void write_report(const fs::path& path, const MetricReport& r) {
  json j = {{"accuracy", r.accuracy}, {"is", r.is},         {"fid", r.fid},
            {"diversity", r.diversity}, {"method", r.method}, {"eta_g", r.eta_g},
            {"tau", r.tau},             {"seed", r.seed}};
  write_text(path, j.dump(2) + "\n");
}

MetricReport read_report(const fs::path& path) {
  const auto j = parse_json_file(path);
  try {
    MetricReport r;
    r.accuracy = j.at("accuracy").get<double>();
    r.is = j.at("is").get<double>();
    r.fid = j.at("fid").get<double>();
    r.diversity = j.at("diversity").get<double>();
    r.method = j.at("method").get<std::string>();
    r.eta_g = j.at("eta_g").get<double>();
    r.tau = j.at("tau").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    return r;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_manifest(const fs::path& path, const RunManifest& m) {
  json j = {{"run_id", m.run_id},
            {"status", std::string(to_string(m.status))},
            {"config", config::serialize(m.config)},
            {"artifacts", m.artifacts},
            {"teacher_accuracy", m.teacher_accuracy},
            {"generator_wall_time_s", m.generator_wall_time_s},
            {"student_wall_time_s", m.student_wall_time_s},
            {"error", m.error}};
  write_text(path, j.dump(2) + "\n");
}

RunManifest read_manifest(const fs::path& path) {
  const auto j = parse_json_file(path);
  try {
    RunManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.status = parse_run_status(j.at("status").get<std::string>());
    m.config = config::parse(j.at("config").get<std::string>());
    m.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
    m.teacher_accuracy = j.at("teacher_accuracy").get<double>();
    m.generator_wall_time_s = j.at("generator_wall_time_s").get<double>();
    m.student_wall_time_s = j.at("student_wall_time_s").get<double>();
    m.error = j.value("error", std::string());
    return m;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string run_id_for(const config::ExperimentConfig& cfg) {
  const auto& t = cfg.train;
  return fmt::format("{}-{}-eta{}-tau{}-g{}-s{}-seed{}-{:08x}", training::to_string(t.method),
                     data::to_string(t.dataset), t.eta_g, t.tau, t.generator_epochs,
                     t.student_epochs, t.seed,
                     fnv1a(config::serialize(cfg)) & 0xffffffffull);
}

std::string teacher_id_for(const training::TrainConfig& t) {
  const auto key = fmt::format("{}|{}|{}|{}|{}|{}", data::to_string(t.dataset),
                               models::to_string(t.teacher_arch), t.teacher_epochs, t.teacher_lr,
                               t.teacher_batch_size, t.seed);
  return fmt::format("{}-{}-seed{}-{:08x}", data::to_string(t.dataset),
                     models::to_string(t.teacher_arch), t.seed, fnv1a(key) & 0xffffffffull);
}

Workspace::Workspace(fs::path root) : root_(std::move(root)) {}

fs::path Workspace::run_dir(const std::string& run_id) const { return root_ / "runs" / run_id; }

fs::path Workspace::teacher_dir(const training::TrainConfig& config) const {
  return root_ / "teachers" / teacher_id_for(config);
}

fs::path Workspace::sweeps_dir() const { return root_ / "sweeps"; }

std::optional<RunManifest> Workspace::find_run(const std::string& run_id) const {
  const auto path = run_dir(run_id) / "manifest.json";
  if (!fs::exists(path)) return std::nullopt;
  return read_manifest(path);
}

std::vector<RunManifest> Workspace::list_runs() const {
  std::vector<RunManifest> out;
  const auto dir = root_ / "runs";
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto path = entry.path() / "manifest.json";
    if (!fs::exists(path)) continue;
    try {
      out.push_back(read_manifest(path));
    } catch (const std::exception&) {
      // A manifest from an interrupted write is skipped, not fatal.
    }
  }
  std::sort(out.begin(), out.end(),
            [](const RunManifest& a, const RunManifest& b) { return a.run_id < b.run_id; });
  return out;
}

TeacherOutcome load_teacher(const Workspace& ws, const training::TrainConfig& config) {
  const auto dir = ws.teacher_dir(config);
  const auto ckpt_path = dir / "teacher.pt";
  const auto info_path = dir / "teacher.json";
  if (!fs::exists(ckpt_path) || !fs::exists(info_path)) {
    throw MissingTeacher("no teacher checkpoint at " + ckpt_path.string() +
                         " (run train-teacher with the same config first)");
  }
  TeacherOutcome out;
  out.model = models::load_classifier(ckpt_path).model;
  out.accuracy = parse_json_file(info_path).at("test_accuracy").get<double>();
  out.reused = true;
  models::freeze(*out.model);
  return out;
}

TeacherOutcome ensure_teacher(const Workspace& ws, const training::TrainConfig& config,
                              const data::DatasetSplits& data, bool force, std::ostream* log) {
  if (!force) {
    try {
      return load_teacher(ws, config);
    } catch (const MissingTeacher&) {
    }
  }
  const auto dir = ws.teacher_dir(config);
  fs::create_directories(dir);
  say(log, fmt::format("training teacher {} for {} epochs", models::to_string(config.teacher_arch),
                       config.teacher_epochs));
  auto result = training::train_teacher(config, data.train, data.test);
  models::save_classifier(dir / "teacher.pt", result.model, config.seed, config.teacher_epochs);
  json info = {{"test_accuracy", result.test_accuracy},
               {"epoch_accuracy", result.epoch_accuracy},
               {"wall_time_s", result.wall_time_s},
               {"architecture", std::string(models::to_string(config.teacher_arch))},
               {"dataset", std::string(data::to_string(config.dataset))}};
  write_text(dir / "teacher.json", info.dump(2) + "\n");
  return {result.model, result.test_accuracy, false};
}

RunOutcome distill(const Workspace& ws, const config::ExperimentConfig& cfg,
                   const data::Dataset& test, bool force, std::ostream* log) {
  const auto& t = cfg.train;
  const auto run_id = run_id_for(cfg);
  const auto dir = ws.run_dir(run_id);

  if (auto existing = ws.find_run(run_id);
      existing && existing->status == RunStatus::kComplete && !force) {
    RunOutcome out;
    out.manifest = *existing;
    out.report = read_report(dir / "report.json");
    out.reused = true;
    say(log, "run " + run_id + " is already complete; reusing it (pass --force to redo)");
    return out;
  }

  auto teacher = load_teacher(ws, t);
  fs::create_directories(dir / "checkpoints");
  config::save(dir / "config.ini", cfg);

  RunManifest manifest;
  manifest.run_id = run_id;
  manifest.config = cfg;
  manifest.status = RunStatus::kRunning;
  manifest.teacher_accuracy = teacher.accuracy;
  manifest.artifacts = {{"config", "config.ini"},
                        {"generator_trace", "generator_trace.csv"},
                        {"student_trace", "student_trace.csv"},
                        {"generator_checkpoint", "checkpoints/generator.pt"},
                        {"student_checkpoint", "checkpoints/student.pt"},
                        {"report", "report.json"},
                        {"grid", "grid.png"}};
  write_manifest(dir / "manifest.json", manifest);

  try {
    const auto every = cfg.run.checkpoint_every;
    AppendFile gen_trace(dir / "generator_trace.csv");
    training::GeneratorHooks gh;
    gh.on_epoch_end = [&](const training::EpochTrace& tr, models::Generator& g) {
      gen_trace.append(generator_row(tr));
      say(log, fmt::format("[{}] generator epoch {}/{} oh {:.4f} ie {:.4f} ds {:.5f} total {:.4f}",
                           training::to_string(t.method), tr.epoch, t.generator_epochs, tr.mean_oh,
                           tr.mean_ie, tr.mean_ds, tr.mean_total));
      if (every > 0 && tr.epoch % every == 0) {
        models::save_generator(dir / "checkpoints" / fmt::format("generator_e{:04}.pt", tr.epoch),
                               g, t.seed, tr.epoch);
      }
    };
    auto gen = training::train_generator(t, teacher.model, teacher.accuracy, gh);
    models::save_generator(dir / "checkpoints" / "generator.pt", gen.model, t.seed,
                           t.generator_epochs);
    manifest.generator_wall_time_s = gen.wall_time_s;

    AppendFile stu_trace(dir / "student_trace.csv");
    training::StudentHooks sh;
    sh.on_epoch_end = [&](const training::StudentEpoch& ep, models::Classifier& s) {
      stu_trace.append(student_row(ep));
      say(log, fmt::format("[{}] student epoch {}/{} kd {:.5f} accuracy {:.4f}",
                           training::to_string(t.method), ep.epoch, t.student_epochs, ep.mean_kd,
                           ep.accuracy));
      if (every > 0 && ep.epoch % every == 0) {
        models::save_classifier(dir / "checkpoints" / fmt::format("student_e{:04}.pt", ep.epoch),
                                s, t.seed, ep.epoch);
      }
    };
    auto stu = training::train_student(t, teacher.model, gen.model, test, sh);
    models::save_classifier(dir / "checkpoints" / "student.pt", stu.model, t.seed,
                            t.student_epochs);
    manifest.student_wall_time_s = stu.wall_time_s;

    const Models m{teacher.model, gen.model, stu.model};
    RunOutcome out;
    out.report = compute_report(cfg, m, test, stu.final_accuracy);
    write_report(dir / "report.json", out.report);
    write_grid(dir / "grid.png", cfg, m);
    manifest.status = RunStatus::kComplete;
    write_manifest(dir / "manifest.json", manifest);
    out.manifest = manifest;
    say(log, fmt::format("run {} complete: accuracy {:.4f} is {:.3f} fid {:.3f} diversity {:.4f}",
                         run_id, out.report.accuracy, out.report.is, out.report.fid,
                         out.report.diversity));
    return out;
  } catch (const std::exception& e) {
    manifest.status = RunStatus::kFailed;
    manifest.error = e.what();
    write_manifest(dir / "manifest.json", manifest);
    throw;
  }
}

std::string_view to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kEtaG:
      return "eta_g";
    case SweepAxis::kTau:
      return "tau";
    case SweepAxis::kGeneratorEpochs:
      return "generator_epochs";
  }
  return "unknown";
}

SweepAxis parse_sweep_axis(std::string_view name) {
  if (name == "eta_g") return SweepAxis::kEtaG;
  if (name == "tau") return SweepAxis::kTau;
  if (name == "generator_epochs") return SweepAxis::kGeneratorEpochs;
  throw InvalidArgument("unknown sweep axis '" + std::string(name) +
                        "' (expected eta_g, tau or generator_epochs)");
}

SweepOutcome sweep(const Workspace& ws, const config::ExperimentConfig& base, SweepAxis axis,
                   const std::vector<double>& values, const data::Dataset& test, bool force,
                   std::ostream* log) {
  if (values.empty()) throw InvalidArgument("sweep: no values given");
  std::vector<config::ExperimentConfig> configs;
  for (double v : values) {
    auto c = base;
    switch (axis) {
      case SweepAxis::kEtaG:
        c.train.eta_g = v;
        break;
      case SweepAxis::kTau:
        c.train.tau = v;
        break;
      case SweepAxis::kGeneratorEpochs:
        if (v < 0 || v != static_cast<double>(static_cast<std::int64_t>(v))) {
          throw InvalidArgument("sweep: generator_epochs values must be non-negative integers");
        }
        c.train.generator_epochs = static_cast<std::int64_t>(v);
        break;
    }
    training::validate(c.train);
    configs.push_back(c);
  }

  SweepOutcome out;
  std::string csv = fmt::format("{},method,accuracy,is,fid,diversity,run_id\n", to_string(axis));
  std::string ids;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    auto run = distill(ws, configs[i], test, force, log);
    csv += fmt::format("{},{},{},{},{},{},{}\n", values[i], run.report.method, run.report.accuracy,
                       run.report.is, run.report.fid, run.report.diversity, run.manifest.run_id);
    ids += run.manifest.run_id;
    out.runs.push_back(std::move(run));
  }
  fs::create_directories(ws.sweeps_dir());
  out.csv_path = ws.sweeps_dir() / fmt::format("{}-{}-{:08x}.csv", to_string(axis),
                                               training::to_string(base.train.method),
                                               fnv1a(ids) & 0xffffffffull);
  write_text(out.csv_path, csv);
  return out;
}

std::vector<fs::path> render_report(const Workspace& ws, const fs::path& out_dir) {
  std::vector<RunManifest> done;
  for (auto& m : ws.list_runs()) {
    if (m.status == RunStatus::kComplete) done.push_back(std::move(m));
  }
  if (done.empty()) throw NoCompletedRuns("no completed runs in " + ws.root().string());
  fs::create_directories(out_dir);
  std::vector<fs::path> written;

  std::string summary =
      "run_id,method,dataset,eta_g,tau,generator_epochs,student_epochs,seed,accuracy,is,fid,"
      "diversity,generator_wall_time_s,student_wall_time_s\n";
  for (const auto& m : done) {
    const auto dir = ws.run_dir(m.run_id);
    const auto& t = m.config.train;
    const auto rep = read_report(dir / "report.json");
    summary += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", m.run_id, rep.method,
                           data::to_string(t.dataset), t.eta_g, t.tau, t.generator_epochs,
                           t.student_epochs, t.seed, rep.accuracy, rep.is, rep.fid, rep.diversity,
                           m.generator_wall_time_s, m.student_wall_time_s);

    const auto loss_path = out_dir / (m.run_id + "_loss.csv");
    write_text(loss_path, read_text(dir / "generator_trace.csv"));
    written.push_back(loss_path);

    const auto acc_path = out_dir / (m.run_id + "_accuracy.csv");
    write_text(acc_path, read_text(dir / "student_trace.csv"));
    written.push_back(acc_path);

    const auto grid_path = out_dir / (m.run_id + "_grid.png");
    Models models_for_grid;
    models_for_grid.teacher = load_teacher(ws, t).model;
    models_for_grid.generator = models::load_generator(dir / "checkpoints" / "generator.pt").model;
    write_grid(grid_path, m.config, models_for_grid);
    written.push_back(grid_path);
  }
  const auto summary_path = out_dir / "summary.csv";
  write_text(summary_path, summary);
  written.push_back(summary_path);
  return written;
}

MetricReport evaluate_run(const Workspace& ws, const std::string& run_id,
                          const data::Dataset& test) {
  const auto manifest = ws.find_run(run_id);
  if (!manifest) throw InvalidArgument("no run named " + run_id);
  if (manifest->status != RunStatus::kComplete) {
    throw StateError("run " + run_id + " is " + std::string(to_string(manifest->status)));
  }
  const auto dir = ws.run_dir(run_id);
  Models m;
  m.teacher = load_teacher(ws, manifest->config.train).model;
  m.generator = models::load_generator(dir / "checkpoints" / "generator.pt").model;
  m.student = models::load_classifier(dir / "checkpoints" / "student.pt").model;
  const double acc = training::evaluate_accuracy(*m.student, test);
  return compute_report(manifest->config, m, test, acc);
}

}  // namespace dfkd::experiment
