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

// Workspace layout and run orchestration.
//
//   <workspace>/teachers/<teacher_id>/teacher.pt, teacher.json
//   <workspace>/runs/<run_id>/config.ini          config snapshot
//                             manifest.json       status, artifacts, timing
//                             generator_trace.csv
//                             student_trace.csv
//                             report.json         MetricReport
//                             grid.png            per-class average images
//                             checkpoints/        generator.pt, student.pt, ...
//   <workspace>/sweeps/<axis>-<method>-<hash>.csv
//
// Run ids are derived from the full configuration, so re-running the same
// configuration finds the same directory. Completed runs are reused unless
// force is set.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dfkd/config.hpp"
#include "dfkd/data.hpp"
#include "dfkd/models.hpp"

namespace dfkd::experiment {

class MissingTeacher : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NoCompletedRuns : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class RunStatus { kPending, kRunning, kComplete, kFailed };
std::string_view to_string(RunStatus status);
RunStatus parse_run_status(std::string_view name);

struct MetricReport {
  double accuracy = 0.0;
  double is = 0.0;
  double fid = 0.0;
  double diversity = 0.0;
  std::string method;
  double eta_g = 0.0;
  double tau = 0.0;
  std::uint64_t seed = 0;
};

void write_report(const std::filesystem::path& path, const MetricReport& report);
MetricReport read_report(const std::filesystem::path& path);

struct RunManifest {
  std::string run_id;
  config::ExperimentConfig config;
  RunStatus status = RunStatus::kPending;
  std::map<std::string, std::string> artifacts;  // name -> path relative to the run dir
  double teacher_accuracy = 0.0;
  double generator_wall_time_s = 0.0;
  double student_wall_time_s = 0.0;
  std::string error;
};

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);
RunManifest read_manifest(const std::filesystem::path& path);

// Header shared by generator_trace.csv and student_trace.csv.
inline constexpr const char* kTraceHeader =
    "epoch,loss_oh,loss_ie,loss_ds,loss_total,accuracy,wall_time_s";

// Readable prefix plus a hash of the serialized configuration.
std::string run_id_for(const config::ExperimentConfig& config);
std::string teacher_id_for(const training::TrainConfig& config);

class Workspace {
 public:
  explicit Workspace(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path run_dir(const std::string& run_id) const;
  std::filesystem::path teacher_dir(const training::TrainConfig& config) const;
  std::filesystem::path sweeps_dir() const;

  std::optional<RunManifest> find_run(const std::string& run_id) const;
  // All runs with a readable manifest, sorted by run id.
  std::vector<RunManifest> list_runs() const;

 private:
  std::filesystem::path root_;
};

struct TeacherOutcome {
  models::Classifier model;
  double accuracy = 0.0;
  bool reused = false;
};

// Trains the teacher and stores it, or reuses a stored one unless force.
TeacherOutcome ensure_teacher(const Workspace& ws, const training::TrainConfig& config,
                              const data::DatasetSplits& data, bool force,
                              std::ostream* log = nullptr);

// Throws MissingTeacher when no teacher has been stored for config.
TeacherOutcome load_teacher(const Workspace& ws, const training::TrainConfig& config);

struct RunOutcome {
  RunManifest manifest;
  MetricReport report;
  bool reused = false;
};

// Generator training, student distillation, metrics and artifacts for one
// configuration. `test` is used only for evaluation.
RunOutcome distill(const Workspace& ws, const config::ExperimentConfig& config,
                   const data::Dataset& test, bool force, std::ostream* log = nullptr);

enum class SweepAxis { kEtaG, kTau, kGeneratorEpochs };
std::string_view to_string(SweepAxis axis);
SweepAxis parse_sweep_axis(std::string_view name);

// One distill run per value (all other fields, including the seed, shared).
// Writes the combined CSV into the sweeps directory and returns its path.
struct SweepOutcome {
  std::vector<RunOutcome> runs;
  std::filesystem::path csv_path;
};
SweepOutcome sweep(const Workspace& ws, const config::ExperimentConfig& base, SweepAxis axis,
                   const std::vector<double>& values, const data::Dataset& test, bool force,
                   std::ostream* log = nullptr);

// Per-run loss and accuracy CSVs, average-image grids and a summary table in
// out_dir. Throws NoCompletedRuns when the workspace has none.
std::vector<std::filesystem::path> render_report(const Workspace& ws,
                                                 const std::filesystem::path& out_dir);

// Recomputes the MetricReport of a completed run from its checkpoints.
MetricReport evaluate_run(const Workspace& ws, const std::string& run_id,
                          const data::Dataset& test);

}  // namespace dfkd::experiment
