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

// Acceptance runner. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. MNIST runs are cached in the workspace, so
// only the first invocation pays for training.
//
//   dfkd_acceptance [--workspace DIR] [--data-root DIR] [--only 1,2,9]

#include <torch/torch.h>

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "dfkd/config.hpp"
#include "dfkd/experiment.hpp"
#include "json.hpp"
#include "suites.hpp"

#ifndef DFKD_MNIST_DIR
#define DFKD_MNIST_DIR "data/mnist"
#endif
#ifndef DFKD_ACCEPTANCE_WORKSPACE
#define DFKD_ACCEPTANCE_WORKSPACE "acceptance_ws"
#endif

namespace {

namespace fs = std::filesystem;
namespace X = dfkd::experiment;
namespace T = dfkd::testing;
using dfkd::training::Method;

// Desk-scale settings shared by every MNIST run.
constexpr std::int64_t kBatch = 64;
constexpr std::int64_t kWidth = 32;
constexpr std::int64_t kIterations = 120;
constexpr double kTau = 10.0;
constexpr double kEtaS = 0.002;
constexpr std::uint64_t kSeed = 0;

constexpr double kTeacherGate = 0.975;
constexpr double kTeacherSeconds = 20 * 60;
constexpr double kAccuracy30 = 0.93;
constexpr double kAccuracy200 = 0.96;
constexpr double kDistillSeconds = 90 * 60;
constexpr double kEpochSpread = 0.02;
constexpr double kDaflDrop = 0.10;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome suite_outcome(const T::Suite& suite, double seconds, std::optional<double> limit) {
  Outcome o;
  const auto failed = std::count_if(suite.begin(), suite.end(), [](const T::CheckItem& c) { return !c.passed; });
  o.pass = failed == 0 && (!limit || seconds < *limit);
  o.detail = fmt::format("{} checks, {} failed, {:.1f} s", suite.size(), failed, seconds);
  if (limit) o.detail += fmt::format(" (limit {:.0f} s)", *limit);
  if (failed) o.detail += "; first failure: " + T::first_failure(suite);
  return o;
}

using Rows = std::vector<std::vector<std::string>>;

Rows read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  Rows rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

// Column of a trace CSV by name; rows are 1-based epochs.
std::vector<double> column(const Rows& rows, int index) {
  std::vector<double> out;
  for (const auto& r : rows) out.push_back(std::stod(r.at(static_cast<std::size_t>(index))));
  return out;
}

constexpr int kOhColumn = 1;
constexpr int kIeColumn = 2;
constexpr int kAccuracyColumn = 5;

double sample_std(const std::vector<double>& v, std::size_t first_epoch, std::size_t last_epoch) {
  const std::vector<double> w(v.begin() + static_cast<long>(first_epoch - 1), v.begin() + static_cast<long>(last_epoch));
  double mean = 0;
  for (double x : w) mean += x;
  mean /= static_cast<double>(w.size());
  double var = 0;
  for (double x : w) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(w.size() - 1));
}

class Mnist {
 public:
  Mnist(fs::path workspace, fs::path data_root) : ws_(std::move(workspace)), root_(std::move(data_root)) {
    fs::create_directories(ws_.root());
    log_.open(ws_.root() / "acceptance.log", std::ios::app);
  }

  static dfkd::config::ExperimentConfig desk(Method method, double eta_g, std::int64_t generator_epochs,
                                             std::int64_t student_epochs) {
    auto c = dfkd::config::parse("");
    auto& t = c.train;
    t.method = method;
    t.eta_g = eta_g;
    t.eta_s = kEtaS;
    t.tau = kTau;
    t.generator_epochs = generator_epochs;
    t.student_epochs = student_epochs;
    t.batch_size = kBatch;
    t.generator_width = kWidth;
    t.iterations_per_epoch = kIterations;
    t.seed = kSeed;
    return c;
  }

  const dfkd::data::DatasetSplits& data() {
    if (!data_) data_ = dfkd::data::load_dataset(dfkd::data::DatasetKind::kMnist, root_);
    return *data_;
  }

  X::TeacherOutcome teacher() {
    return X::ensure_teacher(ws_, desk(Method::kRdskd, 0.001, 0, 0).train, data(), false, &log_);
  }

  double teacher_wall_time() {
    std::ifstream in(ws_.teacher_dir(desk(Method::kRdskd, 0.001, 0, 0).train) / "teacher.json");
    return nlohmann::json::parse(in).at("wall_time_s").get<double>();
  }

  X::RunOutcome run(const dfkd::config::ExperimentConfig& cfg) {
    auto key = X::run_id_for(cfg);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    teacher();
    std::cerr << "[acceptance] " << key << "\n";
    auto out = X::distill(ws_, cfg, data().test, false, &log_);
    cache_.emplace(key, out);
    return out;
  }

  Rows generator_trace(const X::RunOutcome& r) { return read_csv(ws_.run_dir(r.manifest.run_id) / "generator_trace.csv"); }
  Rows student_trace(const X::RunOutcome& r) { return read_csv(ws_.run_dir(r.manifest.run_id) / "student_trace.csv"); }

 private:
  X::Workspace ws_;
  fs::path root_;
  std::ofstream log_;
  std::optional<dfkd::data::DatasetSplits> data_;
  std::map<std::string, X::RunOutcome> cache_;
};

Outcome criterion_teacher(Mnist& m) {
  const auto t = m.teacher();
  const double secs = m.teacher_wall_time();
  return {t.accuracy >= kTeacherGate && secs <= kTeacherSeconds,
          fmt::format("test accuracy {:.4f} (need >= {}), training time {:.0f} s (limit {:.0f} s)", t.accuracy,
                      kTeacherGate, secs, kTeacherSeconds)};
}

Outcome criterion_distillation(Mnist& m) {
  const auto r = m.run(Mnist::desk(Method::kRdskd, 0.001, 20, 200));
  const auto acc = column(m.student_trace(r), kAccuracyColumn);
  if (acc.size() < 200) return {false, "student trace has fewer than 200 epochs"};
  const double a30 = acc[29], a200 = acc[199];
  const double secs = r.manifest.generator_wall_time_s + r.manifest.student_wall_time_s;
  return {a30 >= kAccuracy30 && a200 >= kAccuracy200 && secs <= kDistillSeconds,
          fmt::format("accuracy {:.4f} after 30 student epochs (need >= {}), {:.4f} after 200 (need >= {}); "
                      "{:.0f} s (limit {:.0f} s)",
                      a30, kAccuracy30, a200, kAccuracy200, secs, kDistillSeconds)};
}

Outcome criterion_stability(Mnist& m) {
  const auto rdskd = m.generator_trace(m.run(Mnist::desk(Method::kRdskd, 0.001, 20, 200)));
  auto hi = Mnist::desk(Method::kDafl, 0.001, 20, 0);
  hi.train.beta = 500;
  hi.train.nonfinite = dfkd::training::NonFinitePolicy::kClampLogs;
  auto lo = Mnist::desk(Method::kDafl, 0.001, 20, 0);
  lo.train.beta = 0.5;
  const auto dafl_hi = m.generator_trace(m.run(hi));
  const auto dafl_lo = m.generator_trace(m.run(lo));

  const auto r_oh = column(rdskd, kOhColumn), r_ie = column(rdskd, kIeColumn);
  const auto h_oh = column(dafl_hi, kOhColumn), l_ie = column(dafl_lo, kIeColumn);
  const double s_r_oh = sample_std(r_oh, 5, 20), s_h_oh = sample_std(h_oh, 5, 20);
  const double s_r_ie = sample_std(r_ie, 5, 20), s_l_ie = sample_std(l_ie, 5, 20);
  const double later_min = *std::min_element(h_oh.begin() + 1, h_oh.end());
  const bool pass = s_r_oh < s_h_oh && s_r_ie < s_l_ie && later_min >= h_oh[0];
  return {pass, fmt::format("std L_OH epochs 5-20: RDSKD {:.3e} vs DAFL(beta=500) {:.3e}; std L_IE: RDSKD {:.3e} vs "
                            "DAFL(beta=0.5) {:.3e}; DAFL(beta=500) L_OH epoch 1 {:.4f}, min over 2-20 {:.4f}",
                            s_r_oh, s_h_oh, s_r_ie, s_l_ie, h_oh[0], later_min)};
}

Outcome criterion_eta_robustness(Mnist& m) {
  std::map<Method, std::vector<double>> acc;
  for (double eta : {0.001, 0.005, 0.2}) {
    for (Method meth : {Method::kRdskd, Method::kDafl}) acc[meth].push_back(m.run(Mnist::desk(meth, eta, 20, 30)).report.accuracy);
  }
  auto spread = [](const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()) - *std::min_element(v.begin(), v.end()); };
  const auto& r = acc[Method::kRdskd];
  const auto& d = acc[Method::kDafl];
  return {spread(r) <= spread(d),
          fmt::format("eta_G 0.001/0.005/0.2: RDSKD {:.4f}/{:.4f}/{:.4f} spread {:.4f}; DAFL {:.4f}/{:.4f}/{:.4f} spread {:.4f}",
                      r[0], r[1], r[2], spread(r), d[0], d[1], d[2], spread(d))};
}

Outcome criterion_epoch_robustness(Mnist& m) {
  const double r20 = m.run(Mnist::desk(Method::kRdskd, 0.001, 20, 30)).report.accuracy;
  const double d20 = m.run(Mnist::desk(Method::kDafl, 0.001, 20, 30)).report.accuracy;
  const double r200 = m.run(Mnist::desk(Method::kRdskd, 0.001, 200, 30)).report.accuracy;
  const double d200 = m.run(Mnist::desk(Method::kDafl, 0.001, 200, 30)).report.accuracy;
  return {std::abs(r200 - r20) <= kEpochSpread && d20 - d200 >= kDaflDrop,
          fmt::format("RDSKD {:.4f} -> {:.4f} (|change| {:.4f}, limit {}); DAFL {:.4f} -> {:.4f} (drop {:.4f}, need >= {})",
                      r20, r200, std::abs(r200 - r20), kEpochSpread, d20, d200, d20 - d200, kDaflDrop)};
}

Outcome criterion_diversity(Mnist& m) {
  const auto r = m.run(Mnist::desk(Method::kRdskd, 0.001, 20, 30)).report;
  const auto d = m.run(Mnist::desk(Method::kDafl, 0.001, 20, 30)).report;
  return {r.diversity > d.diversity,
          fmt::format("pairwise diversity of 1000 images: RDSKD {:.5f}, DAFL {:.5f}", r.diversity, d.diversity)};
}

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  CLI::App app{"Acceptance criteria"};
  std::string workspace = DFKD_ACCEPTANCE_WORKSPACE;
  std::string data_root;
  std::vector<int> only;
  app.add_option("--workspace", workspace, "Cache for MNIST runs")->capture_default_str();
  app.add_option("--data-root", data_root, "MNIST directory (default: $DFKD_DATA_ROOT or the configured one)");
  app.add_option("--only", only, "Criteria to run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  if (data_root.empty()) {
    const char* env = std::getenv(dfkd::data::kDataRootEnv);
    data_root = env && *env ? env : DFKD_MNIST_DIR;
  }
  Mnist mnist(workspace, data_root);
  const bool have_mnist = fs::exists(fs::path(data_root) / "train-images-idx3-ubyte");

  struct Criterion {
    int id;
    const char* name;
    bool needs_mnist;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria = {
      {1, "loss unit suite", false,
       [] {
         const auto t0 = std::chrono::steady_clock::now();
         const auto s = T::loss_example_suite();
         return suite_outcome(s, seconds_since(t0), 10);
       }},
      {2, "gradient checks", false,
       [] {
         const auto t0 = std::chrono::steady_clock::now();
         const auto s = T::gradient_suite(T::kGradientTrials, 2026);
         return suite_outcome(s, seconds_since(t0), 120);
       }},
      {3, "teacher gate", true, [&] { return criterion_teacher(mnist); }},
      {4, "desk-scale distillation", true, [&] { return criterion_distillation(mnist); }},
      {5, "stability of loss traces", true, [&] { return criterion_stability(mnist); }},
      {6, "robustness over eta_G", true, [&] { return criterion_eta_robustness(mnist); }},
      {7, "robustness over generator epochs", true, [&] { return criterion_epoch_robustness(mnist); }},
      {8, "diversity trend", true, [&] { return criterion_diversity(mnist); }},
      {9, "metric oracles", false,
       [] {
         const auto t0 = std::chrono::steady_clock::now();
         const auto s = T::metric_oracle_suite(9);
         return suite_outcome(s, seconds_since(t0), std::nullopt);
       }},
      {10, "property suite", false,
       [] {
         const auto t0 = std::chrono::steady_clock::now();
         const auto s = T::property_suite(10);
         return suite_outcome(s, seconds_since(t0), 300);
       }},
  };

  const std::set<int> wanted(only.begin(), only.end());
  int failures = 0;
  for (const auto& c : criteria) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    Outcome o;
    if (c.needs_mnist && !have_mnist) {
      o = {false, "MNIST files not found in " + data_root + " (run tools/fetch_mnist.sh)"};
    } else {
      try {
        o = c.check();
      } catch (const std::exception& e) {
        std::string what = e.what();
        o = {false, "error: " + what.substr(0, what.find('\n'))};
      }
    }
    if (!o.pass) ++failures;
    std::cout << fmt::format("{} criterion {:>2} ({}): {}", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail)
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
