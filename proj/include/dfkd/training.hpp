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

// Teacher pretraining, generator training and student distillation.
//
// All three procedures are single-threaded drivers that own their model
// state. Given the same TrainConfig (including seed) they replay the same
// sequence of random draws, so traces are reproducible on one platform.

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dfkd/data.hpp"
#include "dfkd/losses.hpp"
#include "dfkd/models.hpp"

namespace dfkd::training {

enum class Method { kRdskd, kDafl, kMskd };

std::string_view to_string(Method method);
Method parse_method(std::string_view name);

// What to do when a generator or student step produces a NaN/Inf loss.
enum class NonFinitePolicy {
  kAbort,      // throw NonFiniteLoss carrying the traces so far
  kClampLogs,  // keep stepping; clamp only the values written to traces
};

struct TrainConfig {
  data::DatasetKind dataset = data::DatasetKind::kMnist;
  Method method = Method::kRdskd;

  double eta_g = 0.001;
  double eta_s = 0.002;
  double tau = 10.0;
  std::int64_t generator_epochs = 20;
  std::int64_t student_epochs = 200;
  std::int64_t iterations_per_epoch = 120;
  std::int64_t batch_size = 512;
  double alpha = 0.1;
  double beta = 5.0;
  double epsilon = losses::kDefaultEpsilon;
  std::uint64_t seed = 0;

  // Architecture and latent size; dataset defaults come from default_config.
  std::int64_t latent_dim = 100;
  std::int64_t generator_width = 128;
  models::Architecture teacher_arch = models::Architecture::kLeNet5;
  models::Architecture student_arch = models::Architecture::kLeNet5Half;

  std::int64_t teacher_epochs = 30;
  double teacher_lr = 0.001;
  std::int64_t teacher_batch_size = 256;

  // Student learning rate is multiplied by lr_decay_factor every
  // lr_decay_every epochs; 0 disables decay.
  std::int64_t lr_decay_every = 0;
  double lr_decay_factor = 0.1;

  NonFinitePolicy nonfinite = NonFinitePolicy::kAbort;
};

// Per-dataset settings: latent dimension, teacher/student pair, DAFL alpha and
// beta, and the CIFAR-10 student learning-rate decay.
TrainConfig default_config(data::DatasetKind dataset);

// Throws InvalidArgument naming the first violated constraint.
void validate(const TrainConfig& config);

std::int64_t image_channels(data::DatasetKind dataset);
models::GeneratorSpec generator_spec(const TrainConfig& config);
models::ClassifierSpec teacher_spec(const TrainConfig& config);
models::ClassifierSpec student_spec(const TrainConfig& config);

// Per-epoch summary of generator training.
struct EpochTrace {
  std::int64_t epoch = 0;  // 1-based
  double mean_oh = 0.0;
  double mean_ie = 0.0;
  double mean_ds = 0.0;
  double mean_total = 0.0;
  double wall_time_s = 0.0;  // cumulative since the start of the phase
};

struct StudentEpoch {
  std::int64_t epoch = 0;  // 1-based
  double mean_kd = 0.0;
  double std_kd = 0.0;     // across the epoch's iterations
  double accuracy = 0.0;   // test accuracy after the epoch
  double learning_rate = 0.0;
  double wall_time_s = 0.0;
};

struct TeacherResult {
  models::Classifier model;
  double test_accuracy = 0.0;
  std::vector<double> epoch_accuracy;
  double wall_time_s = 0.0;
};

struct GeneratorResult {
  models::Generator model{nullptr};
  std::vector<EpochTrace> traces;
  losses::GeneratorLossState final_state;
  double wall_time_s = 0.0;
};

struct StudentResult {
  models::Classifier model;
  std::vector<StudentEpoch> epochs;
  double final_accuracy = 0.0;
  double wall_time_s = 0.0;
};

struct GeneratorHooks {
  // Called after every epoch, once the loss anchors have been updated.
  std::function<void(const EpochTrace&, models::Generator&)> on_epoch_end;
};

struct StudentHooks {
  std::function<void(const StudentEpoch&, models::Classifier&)> on_epoch_end;
};

// Minimum teacher accuracy required before generator training on MNIST.
inline constexpr double kMnistTeacherGate = 0.95;

// Cross-entropy training of the teacher architecture on real data.
TeacherResult train_teacher(const TrainConfig& config, const data::Dataset& train,
                            const data::Dataset& test);

// Phase 1. The teacher is frozen on entry and stays bit-identical.
// teacher_accuracy, when given, is checked against the MNIST sanity gate.
//
// Each iteration draws one latent batch whose two halves form the diversity
// pairs; the one-hot and entropy terms use the whole batch. RDSKD and MSKD
// calibrate the loss anchors with one no-gradient pass before epoch 1 and
// refresh them from epoch means afterwards.
GeneratorResult train_generator(const TrainConfig& config, const models::Classifier& teacher,
                                std::optional<double> teacher_accuracy = std::nullopt,
                                const GeneratorHooks& hooks = {});

// Phase 2. Teacher and generator are frozen and stay bit-identical.
StudentResult train_student(const TrainConfig& config, const models::Classifier& teacher,
                            const models::Generator& generator, const data::Dataset& test,
                            const StudentHooks& hooks = {});

// Top-1 accuracy of model on a labeled dataset, evaluated in eval mode.
double evaluate_accuracy(models::ClassifierImpl& model, const data::Dataset& test,
                         std::int64_t batch_size = 1000);

// Loss terms of one generator forward pass, exposed for tests and reports.
struct GeneratorLossTerms {
  torch::Tensor oh, ie, ds, activation, total;
};
GeneratorLossTerms generator_loss_terms(const TrainConfig& config,
                                        models::ClassifierImpl& teacher,
                                        const torch::Tensor& latents,
                                        const torch::Tensor& images,
                                        const losses::GeneratorLossState& state);

// Seeds derived from TrainConfig::seed for each independent random stream.
enum class Stream : std::uint64_t {
  kTeacherInit = 1,
  kTeacherShuffle,
  kGeneratorInit,
  kGeneratorLatents,
  kStudentInit,
  kStudentLatents,
  kMetrics,
};
std::uint64_t stream_seed(std::uint64_t seed, Stream stream);

// Standard-normal (n, d) latent batch drawn from gen.
torch::Tensor sample_latents(at::Generator& gen, std::int64_t n, std::int64_t d);
at::Generator make_rng(std::uint64_t seed);

}  // namespace dfkd::training
