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

#include "dfkd/config.hpp"

#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "dfkd/errors.hpp"

namespace dfkd::config {
namespace {

using training::TrainConfig;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& v) {
  std::size_t used = 0;
  const double d = std::stod(v, &used);
  if (used != v.size()) throw std::invalid_argument("trailing characters");
  return d;
}

std::int64_t to_int(const std::string& v) {
  std::int64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc() || r.ptr != end) throw std::invalid_argument("not an integer");
  return out;
}

std::uint64_t to_uint(const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc() || r.ptr != end) throw std::invalid_argument("not a non-negative integer");
  return out;
}

std::string fmt_double(double d) { return fmt::format("{}", d); }

std::string_view to_string(training::NonFinitePolicy p) {
  return p == training::NonFinitePolicy::kAbort ? "abort" : "clamp_logs";
}

training::NonFinitePolicy parse_policy(const std::string& v) {
  if (v == "abort") return training::NonFinitePolicy::kAbort;
  if (v == "clamp_logs") return training::NonFinitePolicy::kClampLogs;
  throw std::invalid_argument("expected abort or clamp_logs");
}

struct Field {
  std::string section;
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define DFKD_FIELD(sec, name, member, parse_fn, print_fn)                                      \
  Field {                                                                                      \
    sec, #name, [](ExperimentConfig& c, const std::string& v) { c.member = parse_fn(v); },    \
        [](const ExperimentConfig& c) { return std::string(print_fn(c.member)); }            \
  }

std::string int_str(std::int64_t v) { return std::to_string(v); }
std::string uint_str(std::uint64_t v) { return std::to_string(v); }
models::Architecture arch(const std::string& v) { return models::parse_architecture(v); }
training::Method method(const std::string& v) { return training::parse_method(v); }
data::DatasetKind dataset(const std::string& v) { return data::parse_dataset_kind(v); }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      DFKD_FIELD("data", dataset, train.dataset, dataset, data::to_string),
      DFKD_FIELD("models", teacher_arch, train.teacher_arch, arch, models::to_string),
      DFKD_FIELD("models", student_arch, train.student_arch, arch, models::to_string),
      DFKD_FIELD("models", latent_dim, train.latent_dim, to_int, int_str),
      DFKD_FIELD("models", generator_width, train.generator_width, to_int, int_str),
      DFKD_FIELD("losses", alpha, train.alpha, to_double, fmt_double),
      DFKD_FIELD("losses", beta, train.beta, to_double, fmt_double),
      DFKD_FIELD("losses", epsilon, train.epsilon, to_double, fmt_double),
      DFKD_FIELD("losses", tau, train.tau, to_double, fmt_double),
      DFKD_FIELD("training", method, train.method, method, training::to_string),
      DFKD_FIELD("training", eta_g, train.eta_g, to_double, fmt_double),
      DFKD_FIELD("training", eta_s, train.eta_s, to_double, fmt_double),
      DFKD_FIELD("training", generator_epochs, train.generator_epochs, to_int, int_str),
      DFKD_FIELD("training", student_epochs, train.student_epochs, to_int, int_str),
      DFKD_FIELD("training", iterations_per_epoch, train.iterations_per_epoch, to_int, int_str),
      DFKD_FIELD("training", batch_size, train.batch_size, to_int, int_str),
      DFKD_FIELD("training", seed, train.seed, to_uint, uint_str),
      DFKD_FIELD("training", teacher_epochs, train.teacher_epochs, to_int, int_str),
      DFKD_FIELD("training", teacher_lr, train.teacher_lr, to_double, fmt_double),
      DFKD_FIELD("training", teacher_batch_size, train.teacher_batch_size, to_int, int_str),
      DFKD_FIELD("training", lr_decay_every, train.lr_decay_every, to_int, int_str),
      DFKD_FIELD("training", lr_decay_factor, train.lr_decay_factor, to_double, fmt_double),
      DFKD_FIELD("training", nonfinite, train.nonfinite, parse_policy, to_string),
      DFKD_FIELD("run", checkpoint_every, run.checkpoint_every, to_int, int_str),
      DFKD_FIELD("run", metric_samples, run.metric_samples, to_int, int_str),
      DFKD_FIELD("run", is_splits, run.is_splits, to_int, int_str),
      DFKD_FIELD("run", diversity_pairs, run.diversity_pairs, to_int, int_str),
      DFKD_FIELD("run", grid_samples_per_class, run.grid_samples_per_class, to_int, int_str),
  };
  return table;
}

#undef DFKD_FIELD

const Field* find_field(const std::string& section, const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key && (section.empty() || f.section == section)) return &f;
  }
  return nullptr;
}

bool known_section(const std::string& s) {
  for (const auto& f : fields()) {
    if (f.section == s) return true;
  }
  return false;
}

struct Assignment {
  const Field* field;
  std::string value;
  int line;
};

void check_run_options(const RunOptions& r) {
  if (r.checkpoint_every < 0) throw InvalidArgument("config: checkpoint_every must be >= 0");
  if (r.metric_samples < 2) throw InvalidArgument("config: metric_samples must be >= 2");
  if (r.is_splits < 1) throw InvalidArgument("config: is_splits must be >= 1");
  if (r.metric_samples < 2 * r.is_splits) {
    throw InvalidArgument("config: metric_samples must be at least 2 * is_splits");
  }
  if (r.diversity_pairs < 1) throw InvalidArgument("config: diversity_pairs must be >= 1");
  if (r.grid_samples_per_class < 1) throw InvalidArgument("config: grid_samples_per_class must be >= 1");
}

}  // namespace

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  std::vector<Assignment> assignments;
  std::set<const Field*> seen;

  while (std::getline(in, raw)) {
    ++line_no;
    const auto cut = raw.find_first_of("#;");
    const auto line = trim(cut == std::string::npos ? raw : raw.substr(0, cut));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(fmt::format("line {}: unterminated section header", line_no), line_no);
      section = trim(line.substr(1, line.size() - 2));
      if (!known_section(section)) {
        throw ConfigError(fmt::format("line {}: unknown section [{}]", line_no, section), line_no);
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(fmt::format("line {}: expected 'key = value', got '{}'", line_no, line), line_no);
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (section.empty()) {
      throw ConfigError(fmt::format("line {}: key '{}' appears before any [section]", line_no, key), line_no);
    }
    const Field* f = find_field(section, key);
    if (f == nullptr) {
      throw ConfigError(fmt::format("line {}: unknown key '{}' in [{}]", line_no, key, section), line_no);
    }
    if (value.empty()) {
      throw ConfigError(fmt::format("line {}: empty value for '{}'", line_no, key), line_no);
    }
    if (!seen.insert(f).second) {
      throw ConfigError(fmt::format("line {}: duplicate key '{}'", line_no, key), line_no);
    }
    assignments.push_back({f, value, line_no});
  }

  // The dataset picks the defaults, so it is applied before anything else.
  ExperimentConfig config;
  config.train = training::default_config(data::DatasetKind::kMnist);
  for (const auto& a : assignments) {
    if (a.field->key != "dataset") continue;
    try {
      config.train = training::default_config(data::parse_dataset_kind(a.value));
    } catch (const std::exception& e) {
      throw ConfigError(fmt::format("line {}: bad value '{}' for dataset: {}", a.line, a.value, e.what()), a.line);
    }
  }
  for (const auto& a : assignments) {
    try {
      a.field->set(config, a.value);
    } catch (const std::exception& e) {
      throw ConfigError(fmt::format("line {}: bad value '{}' for {}: {}", a.line, a.value,
                                    a.field->key, e.what()),
                        a.line);
    }
  }
  try {
    training::validate(config.train);
    check_run_options(config.run);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what(), 0);
  }
  return config;
}

ExperimentConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string serialize(const ExperimentConfig& config) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out += '\n';
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += f.key + " = " + f.get(config) + "\n";
  }
  return out;
}

void save(const std::filesystem::path& path, const ExperimentConfig& config) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write config file " + path.string());
  out << serialize(config);
}

void apply_override(ExperimentConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  auto key = trim(assignment.substr(0, eq));
  const auto value = trim(assignment.substr(eq + 1));
  std::string section;
  if (const auto dot = key.find('.'); dot != std::string::npos) {
    section = key.substr(0, dot);
    key = key.substr(dot + 1);
  }
  const Field* f = find_field(section, key);
  if (f == nullptr) throw ConfigError("override names unknown key '" + key + "'");
  try {
    f->set(config, value);
  } catch (const std::exception& e) {
    throw ConfigError("bad value '" + value + "' for " + key + ": " + e.what());
  }
}

bool operator==(const RunOptions& a, const RunOptions& b) {
  return a.checkpoint_every == b.checkpoint_every && a.metric_samples == b.metric_samples &&
         a.is_splits == b.is_splits && a.diversity_pairs == b.diversity_pairs &&
         a.grid_samples_per_class == b.grid_samples_per_class;
}

bool same_train_config(const TrainConfig& a, const TrainConfig& b) {
  ExperimentConfig ca{a, {}}, cb{b, {}};
  return serialize(ca) == serialize(cb);
}

}  // namespace dfkd::config
