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

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "dfkd/errors.hpp"
#include "dfkd/experiment.hpp"
#include "dfkd/image_io.hpp"
#include "fixtures.hpp"

namespace dfkd::testing {
namespace {

namespace fs = std::filesystem;
namespace X = dfkd::experiment;

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

config::ExperimentConfig tiny_experiment() {
  auto c = config::parse("");
  auto& t = c.train;
  t.batch_size = 8;
  t.iterations_per_epoch = 2;
  t.generator_epochs = 2;
  t.student_epochs = 2;
  t.generator_width = 8;
  t.latent_dim = 16;
  t.teacher_epochs = 3;
  t.teacher_batch_size = 32;
  c.run.metric_samples = 40;
  c.run.is_splits = 2;
  c.run.diversity_pairs = 50;
  c.run.grid_samples_per_class = 2;
  c.run.checkpoint_every = 1;
  return c;
}

class Experiment : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("dfkd-exp");
    data_ = new data::DatasetSplits{toy_digits(600, 1), toy_digits(200, 2)};
    ws_ = new X::Workspace(dir_->path() / "ws");
    const auto t = X::ensure_teacher(*ws_, tiny_experiment().train, *data_, false);
    ASSERT_FALSE(t.reused);
    run_ = new X::RunOutcome(X::distill(*ws_, tiny_experiment(), data_->test, false));
  }
  static void TearDownTestSuite() {
    delete run_;
    delete ws_;
    delete data_;
    delete dir_;
  }

  static TempDir* dir_;
  static data::DatasetSplits* data_;
  static X::Workspace* ws_;
  static X::RunOutcome* run_;
};

TempDir* Experiment::dir_ = nullptr;
data::DatasetSplits* Experiment::data_ = nullptr;
X::Workspace* Experiment::ws_ = nullptr;
X::RunOutcome* Experiment::run_ = nullptr;

TEST(ExperimentIds, RunIdDependsOnTheWholeConfig) {
  const auto a = tiny_experiment();
  auto b = a;
  EXPECT_EQ(X::run_id_for(a), X::run_id_for(b));
  b.train.tau = 4;
  EXPECT_NE(X::run_id_for(a), X::run_id_for(b));
  b = a;
  b.run.diversity_pairs = 51;
  EXPECT_NE(X::run_id_for(a), X::run_id_for(b));
  EXPECT_EQ(X::run_id_for(a).rfind("RDSKD-MNIST-", 0), 0u) << X::run_id_for(a);
  b = a;
  b.train.eta_g = 0.5;
  EXPECT_EQ(X::teacher_id_for(a.train), X::teacher_id_for(b.train));
  b.train.teacher_epochs = 4;
  EXPECT_NE(X::teacher_id_for(a.train), X::teacher_id_for(b.train));
}

TEST(ExperimentFiles, ReportAndManifestRoundTrip) {
  TempDir dir;
  X::MetricReport r{0.9, 7.5, 12.25, 0.3, "DAFL", 0.005, 10, 3};
  X::write_report(dir.path() / "r.json", r);
  const auto back = X::read_report(dir.path() / "r.json");
  EXPECT_EQ(back.accuracy, r.accuracy);
  EXPECT_EQ(back.fid, r.fid);
  EXPECT_EQ(back.method, "DAFL");
  EXPECT_EQ(back.seed, 3u);

  X::RunManifest m;
  m.run_id = "abc";
  m.config = tiny_experiment();
  m.status = X::RunStatus::kFailed;
  m.artifacts = {{"grid", "grid.png"}};
  m.error = "boom";
  X::write_manifest(dir.path() / "m.json", m);
  const auto mb = X::read_manifest(dir.path() / "m.json");
  EXPECT_EQ(mb.status, X::RunStatus::kFailed);
  EXPECT_EQ(mb.error, "boom");
  EXPECT_EQ(mb.artifacts.at("grid"), "grid.png");
  EXPECT_TRUE(config::same_train_config(mb.config.train, m.config.train));

  std::ofstream(dir.path() / "bad.json") << "{ not json";
  EXPECT_THROW(X::read_report(dir.path() / "bad.json"), FormatError);
  EXPECT_THROW(X::parse_run_status("done"), FormatError);
}

TEST(ExperimentErrors, MissingTeacherAndNoRuns) {
  TempDir dir;
  X::Workspace ws(dir.path());
  EXPECT_THROW(X::load_teacher(ws, tiny_experiment().train), X::MissingTeacher);
  EXPECT_THROW(X::distill(ws, tiny_experiment(), toy_digits(20, 1), false), X::MissingTeacher);
  EXPECT_THROW(X::render_report(ws, dir.path() / "out"), X::NoCompletedRuns);
  EXPECT_TRUE(ws.list_runs().empty());
  EXPECT_THROW(X::parse_sweep_axis("alpha"), InvalidArgument);
}

TEST_F(Experiment, RunDirectoryLayout) {
  const auto dir = ws_->run_dir(run_->manifest.run_id);
  for (const char* f : {"config.ini", "manifest.json", "generator_trace.csv", "student_trace.csv", "report.json",
                        "grid.png", "checkpoints/generator.pt", "checkpoints/student.pt",
                        "checkpoints/generator_e0001.pt", "checkpoints/student_e0002.pt"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  EXPECT_EQ(run_->manifest.status, X::RunStatus::kComplete);
  EXPECT_FALSE(run_->reused);
  EXPECT_GE(run_->manifest.teacher_accuracy, 0.95);
  const auto stored = ws_->find_run(run_->manifest.run_id);
  ASSERT_TRUE(stored.has_value());
  EXPECT_EQ(stored->status, X::RunStatus::kComplete);
  EXPECT_TRUE(config::same_train_config(stored->config.train, tiny_experiment().train));
  EXPECT_TRUE(config::same_train_config(config::load(dir / "config.ini").train, tiny_experiment().train));
}

TEST_F(Experiment, TraceFilesHaveTheSharedHeader) {
  const auto dir = ws_->run_dir(run_->manifest.run_id);
  const auto gen = lines_of(dir / "generator_trace.csv");
  const auto stu = lines_of(dir / "student_trace.csv");
  ASSERT_EQ(gen.size(), 3u);
  ASSERT_EQ(stu.size(), 3u);
  EXPECT_EQ(gen[0], "epoch,loss_oh,loss_ie,loss_ds,loss_total,accuracy,wall_time_s");
  EXPECT_EQ(stu[0], X::kTraceHeader);
  EXPECT_EQ(gen[1].rfind("1,", 0), 0u);
  EXPECT_EQ(stu[2].rfind("2,", 0), 0u);
  for (const auto& row : {gen[1], stu[1]}) EXPECT_EQ(std::count(row.begin(), row.end(), ','), 6) << row;
}

TEST_F(Experiment, ReportIsSane) {
  const auto& r = run_->report;
  EXPECT_EQ(r.method, "RDSKD");
  EXPECT_GE(r.accuracy, 0.0);
  EXPECT_LE(r.accuracy, 1.0);
  EXPECT_GE(r.is, 1.0 - 1e-9);
  EXPECT_GE(r.fid, 0.0);
  EXPECT_GE(r.diversity, 0.0);
  const auto disk = X::read_report(ws_->run_dir(run_->manifest.run_id) / "report.json");
  EXPECT_EQ(disk.fid, r.fid);
}

TEST_F(Experiment, CompletedRunsAreReused) {
  const auto again = X::distill(*ws_, tiny_experiment(), data_->test, false);
  EXPECT_TRUE(again.reused);
  EXPECT_EQ(again.report.accuracy, run_->report.accuracy);
  const auto t = X::ensure_teacher(*ws_, tiny_experiment().train, *data_, false);
  EXPECT_TRUE(t.reused);
}

TEST_F(Experiment, ForcedRerunReproducesTheReport) {
  const auto redo = X::distill(*ws_, tiny_experiment(), data_->test, true);
  EXPECT_FALSE(redo.reused);
  EXPECT_EQ(redo.manifest.run_id, run_->manifest.run_id);
  EXPECT_EQ(redo.report.accuracy, run_->report.accuracy);
  EXPECT_EQ(redo.report.is, run_->report.is);
  EXPECT_EQ(redo.report.fid, run_->report.fid);
  EXPECT_EQ(redo.report.diversity, run_->report.diversity);
  EXPECT_EQ(lines_of(ws_->run_dir(redo.manifest.run_id) / "generator_trace.csv").size(), 3u);
}

TEST_F(Experiment, EvaluateRecomputesTheReport) {
  const auto r = X::evaluate_run(*ws_, run_->manifest.run_id, data_->test);
  EXPECT_EQ(r.accuracy, run_->report.accuracy);
  EXPECT_NEAR(r.fid, run_->report.fid, 1e-9 * std::max(1.0, r.fid));
  EXPECT_EQ(r.diversity, run_->report.diversity);
  EXPECT_THROW(X::evaluate_run(*ws_, "nope", data_->test), InvalidArgument);
}

TEST_F(Experiment, SweepWritesOneRowPerValue) {
  const auto out = X::sweep(*ws_, tiny_experiment(), X::SweepAxis::kTau, {2.0, 5.0}, data_->test, false);
  ASSERT_EQ(out.runs.size(), 2u);
  EXPECT_DOUBLE_EQ(out.runs[1].manifest.config.train.tau, 5.0);
  const auto rows = lines_of(out.csv_path);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], "tau,method,accuracy,is,fid,diversity,run_id");
  EXPECT_EQ(rows[1].rfind("2,RDSKD,", 0), 0u) << rows[1];
  EXPECT_THROW(X::sweep(*ws_, tiny_experiment(), X::SweepAxis::kGeneratorEpochs, {1.5}, data_->test, false),
               InvalidArgument);
}

TEST_F(Experiment, ReportRendersPerRunFilesAndGrid) {
  const auto out = dir_->path() / "report";
  const auto files = X::render_report(*ws_, out);
  EXPECT_TRUE(fs::exists(out / "summary.csv"));
  const auto id = run_->manifest.run_id;
  EXPECT_TRUE(fs::exists(out / (id + "_loss.csv")));
  EXPECT_TRUE(fs::exists(out / (id + "_accuracy.csv")));
  const auto grid = image_io::read_png(out / (id + "_grid.png"));
  // Ten class slots of 32 pixels with 2-pixel gutters.
  EXPECT_EQ(grid.size(2), 10 * 34 + 2);
  EXPECT_EQ(grid.size(1), 36);
  const auto summary = lines_of(out / "summary.csv");
  EXPECT_EQ(summary[0].rfind("run_id,method,dataset,", 0), 0u);
  EXPECT_GE(summary.size(), 2u);
  EXPECT_EQ(files.back(), out / "summary.csv");
}

}  // namespace
}  // namespace dfkd::testing
