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

#include "dfkd/training.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "dfkd/errors.hpp"

namespace dfkd::training {
namespace {

using Clock = std::chrono::steady_clock;

constexpr double kLogClamp = 1e6;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double clamp_for_log(double v) {
  if (std::isnan(v)) return kLogClamp;
  return std::clamp(v, -kLogClamp, kLogClamp);
}

std::string dump_traces(const std::vector<EpochTrace>& traces) {
  std::ostringstream os;
  os << "epoch,loss_oh,loss_ie,loss_ds,loss_total,wall_time_s\n";
  for (const auto& t : traces) {
    os << t.epoch << ',' << t.mean_oh << ',' << t.mean_ie << ',' << t.mean_ds << ','
       << t.mean_total << ',' << t.wall_time_s << '\n';
  }
  return os.str();
}

void set_learning_rate(torch::optim::Adam& opt, double lr) {
  for (auto& group : opt.param_groups()) {
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
  }
}

bool needs_anchors(Method m) { return m == Method::kRdskd || m == Method::kMskd; }

}  // namespace

std::string_view to_string(Method method) {
  switch (method) {
    case Method::kRdskd:
      return "RDSKD";
    case Method::kDafl:
      return "DAFL";
    case Method::kMskd:
      return "MSKD";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  if (name == "RDSKD") return Method::kRdskd;
  if (name == "DAFL") return Method::kDafl;
  if (name == "MSKD") return Method::kMskd;
  throw InvalidArgument("unknown method '" + std::string(name) + "' (expected RDSKD, DAFL or MSKD)");
}

TrainConfig default_config(data::DatasetKind dataset) {
  TrainConfig c;
  c.dataset = dataset;
  switch (dataset) {
    case data::DatasetKind::kMnist:
      c.latent_dim = 100;
      c.teacher_arch = models::Architecture::kLeNet5;
      c.student_arch = models::Architecture::kLeNet5Half;
      c.alpha = 0.1;
      c.beta = 5.0;
      break;
    case data::DatasetKind::kSvhn:
      c.latent_dim = 1000;
      c.teacher_arch = models::Architecture::kWResNet40_2;
      c.student_arch = models::Architecture::kWResNet16_1;
      c.alpha = 0.1;
      c.beta = 10.0;
      break;
    case data::DatasetKind::kCifar10:
      c.latent_dim = 1000;
      c.teacher_arch = models::Architecture::kResNet34;
      c.student_arch = models::Architecture::kResNet18;
      c.alpha = 0.1;
      c.beta = 10.0;
      c.lr_decay_every = 800;
      break;
  }
  return c;
}

void validate(const TrainConfig& c) {
  auto fail = [](const std::string& what) { throw InvalidArgument("config: " + what); };
  if (!(c.eta_g > 0.0)) fail("eta_g must be > 0");
  if (!(c.eta_s > 0.0)) fail("eta_s must be > 0");
  if (!(c.tau >= 1.0)) fail("tau must be >= 1");
  if (c.batch_size < 2) fail("batch_size must be >= 2");
  if (c.generator_epochs < 0) fail("generator_epochs must be >= 0");
  if (c.student_epochs < 0) fail("student_epochs must be >= 0");
  if (c.iterations_per_epoch < 1) fail("iterations_per_epoch must be >= 1");
  if (!(c.epsilon > 0.0)) fail("epsilon must be > 0");
  if (!std::isfinite(c.alpha) || !std::isfinite(c.beta)) fail("alpha and beta must be finite");
  if (c.latent_dim < 1) fail("latent_dim must be >= 1");
  if (c.generator_width < 2 || c.generator_width % 2 != 0) fail("generator_width must be even and >= 2");
  if (c.teacher_epochs < 0) fail("teacher_epochs must be >= 0");
  if (!(c.teacher_lr > 0.0)) fail("teacher_lr must be > 0");
  if (c.teacher_batch_size < 1) fail("teacher_batch_size must be >= 1");
  if (c.lr_decay_every < 0) fail("lr_decay_every must be >= 0");
  if (!(c.lr_decay_factor > 0.0)) fail("lr_decay_factor must be > 0");
}

std::int64_t image_channels(data::DatasetKind dataset) {
  return dataset == data::DatasetKind::kMnist ? 1 : 3;
}

models::GeneratorSpec generator_spec(const TrainConfig& c) {
  return {c.latent_dim, image_channels(c.dataset), 32, c.generator_width};
}

models::ClassifierSpec teacher_spec(const TrainConfig& c) {
  return {c.teacher_arch, 10, image_channels(c.dataset), 32};
}

models::ClassifierSpec student_spec(const TrainConfig& c) {
  return {c.student_arch, 10, image_channels(c.dataset), 32};
}

std::uint64_t stream_seed(std::uint64_t seed, Stream stream) {
  // splitmix64 over (seed, stream) so that nearby seeds give unrelated streams.
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(stream) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return (z ^ (z >> 31)) >> 1;  // keep it representable as int64 in checkpoints
}

at::Generator make_rng(std::uint64_t seed) { return at::detail::createCPUGenerator(seed); }

torch::Tensor sample_latents(at::Generator& gen, std::int64_t n, std::int64_t d) {
  return at::randn({n, d}, gen, torch::TensorOptions().dtype(torch::kFloat32));
}

double evaluate_accuracy(models::ClassifierImpl& model, const data::Dataset& test,
                         std::int64_t batch_size) {
  if (test.size() == 0) throw InvalidArgument("evaluate_accuracy: empty test set");
  if (!test.labels.defined()) throw InvalidArgument("evaluate_accuracy: test set has no labels");
  const bool was_training = model.is_training();
  model.eval();
  torch::NoGradGuard no_grad;
  std::int64_t correct = 0;
  for (std::int64_t start = 0; start < test.size(); start += batch_size) {
    const auto end = std::min(test.size(), start + batch_size);
    const auto logits = models::forward_classifier(model, test.images.slice(0, start, end)).logits;
    correct += logits.argmax(1).eq(test.labels.slice(0, start, end)).sum().item<std::int64_t>();
  }
  model.train(was_training);
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

TeacherResult train_teacher(const TrainConfig& config, const data::Dataset& train,
                            const data::Dataset& test) {
  validate(config);
  if (train.size() == 0) throw InvalidArgument("train_teacher: empty training set");
  const auto start = Clock::now();
  TeacherResult result;
  result.model = models::build_classifier(teacher_spec(config),
                                          stream_seed(config.seed, Stream::kTeacherInit));
  auto& model = *result.model;
  torch::optim::Adam opt(model.parameters(), torch::optim::AdamOptions(config.teacher_lr));

  for (std::int64_t epoch = 0; epoch < config.teacher_epochs; ++epoch) {
    model.train();
    data::BatchIterator it(train, config.teacher_batch_size,
                           stream_seed(config.seed, Stream::kTeacherShuffle) + epoch, true);
    while (it.has_next()) {
      const auto batch = it.next();
      const auto logits = models::forward_classifier(model, batch.images).logits;
      const auto loss = torch::nn::functional::cross_entropy(logits, batch.labels);
      opt.zero_grad();
      loss.backward();
      opt.step();
    }
    result.epoch_accuracy.push_back(evaluate_accuracy(model, test));
  }
  result.test_accuracy = result.epoch_accuracy.empty() ? evaluate_accuracy(model, test)
                                                       : result.epoch_accuracy.back();
  models::freeze(model);
  result.wall_time_s = seconds_since(start);
  return result;
}

GeneratorLossTerms generator_loss_terms(const TrainConfig& config,
                                        models::ClassifierImpl& teacher,
                                        const torch::Tensor& latents,
                                        const torch::Tensor& images,
                                        const losses::GeneratorLossState& state) {
  const auto forward = models::forward_classifier(teacher, images);
  if (!torch::isfinite(forward.logits).all().item<bool>()) {
    throw NonFiniteLoss("teacher logits on generated images are not finite");
  }
  const auto probs = losses::softmax_with_temperature(forward.logits, 1.0);
  const auto half = images.size(0) / 2;

  GeneratorLossTerms terms;
  terms.oh = losses::one_hot_loss(probs);
  terms.ie = losses::information_entropy_loss(probs);
  const auto images_a = images.slice(0, 0, half);
  const auto images_b = images.slice(0, half, 2 * half);
  if (config.method == Method::kMskd) {
    terms.ds = losses::mskd_diversity_loss(images_a, images_b, latents.slice(0, 0, half),
                                           latents.slice(0, half, 2 * half), config.epsilon);
  } else {
    terms.ds = losses::diversity_seeking_loss(images_a, images_b, probs.slice(0, 0, half),
                                              probs.slice(0, half, 2 * half), config.epsilon);
  }
  terms.activation = losses::activation_loss(forward.features);
  switch (config.method) {
    case Method::kRdskd:
    case Method::kMskd:
      terms.total = losses::rdskd_generator_loss(terms.oh, terms.ie, terms.ds, state);
      break;
    case Method::kDafl:
      terms.total = losses::dafl_generator_loss(terms.oh, terms.activation, terms.ie,
                                                config.alpha, config.beta);
      break;
  }
  return terms;
}

GeneratorResult train_generator(const TrainConfig& config, const models::Classifier& teacher,
                                std::optional<double> teacher_accuracy,
                                const GeneratorHooks& hooks) {
  validate(config);
  if (!teacher) throw InvalidArgument("train_generator: no teacher");
  if (config.dataset == data::DatasetKind::kMnist && teacher_accuracy &&
      *teacher_accuracy < kMnistTeacherGate) {
    throw StateError("train_generator: teacher accuracy " + std::to_string(*teacher_accuracy) +
                     " is below the MNIST gate of 0.95");
  }
  models::freeze(*teacher);

  const auto start = Clock::now();
  GeneratorResult result;
  result.model = models::build_generator(generator_spec(config),
                                         stream_seed(config.seed, Stream::kGeneratorInit));
  auto& gen = *result.model;
  gen.train();
  torch::optim::Adam opt(gen.parameters(), torch::optim::AdamOptions(config.eta_g));
  auto rng = make_rng(stream_seed(config.seed, Stream::kGeneratorLatents));

  losses::GeneratorLossState state;
  if (needs_anchors(config.method)) {
    torch::NoGradGuard no_grad;
    const auto z = sample_latents(rng, config.batch_size, config.latent_dim);
    losses::GeneratorLossState dummy{0.0, 0.0, true};
    GeneratorLossTerms terms;
    try {
      terms = generator_loss_terms(config, *teacher, z, gen.forward(z), dummy);
    } catch (const NonFiniteLoss& e) {
      throw NonFiniteLoss(std::string(e.what()) + " during anchor calibration");
    }
    state = losses::update_loss_state(state, terms.oh.item<double>(), terms.ie.item<double>());
  }

  for (std::int64_t epoch = 1; epoch <= config.generator_epochs; ++epoch) {
    double sum_oh = 0, sum_ie = 0, sum_ds = 0, sum_total = 0;
    for (std::int64_t it = 0; it < config.iterations_per_epoch; ++it) {
      const auto z = sample_latents(rng, config.batch_size, config.latent_dim);
      const auto images = gen.forward(z);
      const auto where = "epoch " + std::to_string(epoch) + ", iteration " + std::to_string(it + 1);
      GeneratorLossTerms terms;
      try {
        terms = generator_loss_terms(config, *teacher, z, images, state);
      } catch (const NonFiniteLoss& e) {
        throw NonFiniteLoss(std::string(e.what()) + " at " + where + "\n" +
                            dump_traces(result.traces));
      }
      const double total = terms.total.item<double>();
      if (!std::isfinite(total) && config.nonfinite == NonFinitePolicy::kAbort) {
        throw NonFiniteLoss("generator loss became non-finite at " + where + "\n" +
                            dump_traces(result.traces));
      }
      opt.zero_grad();
      terms.total.backward();
      opt.step();
      sum_oh += clamp_for_log(terms.oh.item<double>());
      sum_ie += clamp_for_log(terms.ie.item<double>());
      sum_ds += clamp_for_log(terms.ds.item<double>());
      sum_total += clamp_for_log(total);
    }
    const auto n = static_cast<double>(config.iterations_per_epoch);
    EpochTrace trace{epoch, sum_oh / n, sum_ie / n, sum_ds / n, sum_total / n, seconds_since(start)};
    result.traces.push_back(trace);
    if (needs_anchors(config.method)) {
      state = losses::update_loss_state(state, trace.mean_oh, trace.mean_ie);
    }
    if (hooks.on_epoch_end) hooks.on_epoch_end(trace, result.model);
  }
  result.final_state = state;
  result.wall_time_s = seconds_since(start);
  return result;
}

StudentResult train_student(const TrainConfig& config, const models::Classifier& teacher,
                            const models::Generator& generator, const data::Dataset& test,
                            const StudentHooks& hooks) {
  validate(config);
  if (!teacher || !generator) throw InvalidArgument("train_student: missing teacher or generator");
  models::Generator gen = generator;  // non-const handle to the shared module
  models::freeze(*teacher);
  models::freeze(*gen);

  const auto start = Clock::now();
  StudentResult result;
  result.model = models::build_classifier(student_spec(config),
                                          stream_seed(config.seed, Stream::kStudentInit));
  auto& student = *result.model;
  torch::optim::Adam opt(student.parameters(), torch::optim::AdamOptions(config.eta_s));
  auto rng = make_rng(stream_seed(config.seed, Stream::kStudentLatents));
  double lr = config.eta_s;

  for (std::int64_t epoch = 1; epoch <= config.student_epochs; ++epoch) {
    if (config.lr_decay_every > 0 && epoch > 1 && (epoch - 1) % config.lr_decay_every == 0) {
      lr *= config.lr_decay_factor;
      set_learning_rate(opt, lr);
    }
    student.train();
    std::vector<double> kd;
    kd.reserve(static_cast<std::size_t>(config.iterations_per_epoch));
    for (std::int64_t it = 0; it < config.iterations_per_epoch; ++it) {
      torch::Tensor images, teacher_logits;
      {
        torch::NoGradGuard no_grad;
        images = gen->forward(sample_latents(rng, config.batch_size, config.latent_dim));
        teacher_logits = models::forward_classifier(*teacher, images).logits;
      }
      const auto student_logits = models::forward_classifier(student, images).logits;
      const auto loss = losses::kd_loss(teacher_logits, student_logits, config.tau);
      const double value = loss.item<double>();
      if (!std::isfinite(value) && config.nonfinite == NonFinitePolicy::kAbort) {
        throw NonFiniteLoss("student KD loss became non-finite at epoch " +
                            std::to_string(epoch) + ", iteration " + std::to_string(it + 1));
      }
      opt.zero_grad();
      loss.backward();
      opt.step();
      kd.push_back(clamp_for_log(value));
    }
    StudentEpoch rec;
    rec.epoch = epoch;
    double mean = 0;
    for (double v : kd) mean += v;
    mean /= static_cast<double>(kd.size());
    double var = 0;
    for (double v : kd) var += (v - mean) * (v - mean);
    rec.mean_kd = mean;
    rec.std_kd = kd.size() > 1 ? std::sqrt(var / static_cast<double>(kd.size() - 1)) : 0.0;
    rec.accuracy = evaluate_accuracy(student, test);
    rec.learning_rate = lr;
    rec.wall_time_s = seconds_since(start);
    result.epochs.push_back(rec);
    if (hooks.on_epoch_end) hooks.on_epoch_end(rec, result.model);
  }
  result.final_accuracy =
      result.epochs.empty() ? evaluate_accuracy(student, test) : result.epochs.back().accuracy;
  models::freeze(student);
  result.wall_time_s = seconds_since(start);
  return result;
}

}  // namespace dfkd::training
