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

// Experiment configuration files.
//
// The format is flat "key = value" text grouped under [section] headers:
//
//   [data]      dataset
//   [models]    teacher_arch, student_arch, latent_dim, generator_width
//   [losses]    alpha, beta, epsilon, tau
//   [training]  method, eta_g, eta_s, generator_epochs, ...
//   [run]       checkpoint_every, metric_samples, is_splits, ...
//
// '#' and ';' start comments. Missing keys take the per-dataset defaults;
// unknown sections or keys, duplicates and unparsable values raise
// ConfigError with the 1-based line number.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "dfkd/training.hpp"

namespace dfkd::config {

// Settings of a run that do not change what is trained.
struct RunOptions {
  std::int64_t checkpoint_every = 0;  // generator/student epochs; 0 = final only
  std::int64_t metric_samples = 1000;
  std::int64_t is_splits = 10;
  std::int64_t diversity_pairs = 500;
  std::int64_t grid_samples_per_class = 64;
};

struct ExperimentConfig {
  training::TrainConfig train;
  RunOptions run;
};

ExperimentConfig parse(const std::string& text);
ExperimentConfig load(const std::filesystem::path& path);

// Every field, one per line, with doubles printed at round-trip precision.
// parse(serialize(c)) reproduces c exactly.
std::string serialize(const ExperimentConfig& config);
void save(const std::filesystem::path& path, const ExperimentConfig& config);

// Applies a single "key=value" or "section.key=value" override.
void apply_override(ExperimentConfig& config, const std::string& assignment);

bool operator==(const RunOptions& a, const RunOptions& b);
bool same_train_config(const training::TrainConfig& a, const training::TrainConfig& b);

}  // namespace dfkd::config
