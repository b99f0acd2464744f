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

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

namespace dfkd::models {

struct GeneratorSpec {
  std::int64_t latent_dim = 100;
  std::int64_t out_channels = 1;
  std::int64_t out_size = 32;
  std::int64_t base_width = 128;
};

enum class Architecture {
  kLeNet5,
  kLeNet5Half,
  kWResNet40_2,
  kWResNet16_1,
  kResNet34,
  kResNet18,
};

std::string_view to_string(Architecture arch);
// Accepts the names printed by to_string ("LeNet5", "WResNet-40-2", ...).
Architecture parse_architecture(std::string_view name);

struct ClassifierSpec {
  Architecture architecture = Architecture::kLeNet5;
  std::int64_t num_classes = 10;
  std::int64_t in_channels = 1;
  std::int64_t image_size = 32;
};

struct ForwardResult {
  torch::Tensor logits;    // (n, K)
  torch::Tensor features;  // (n, F), input to the final linear layer
};

// Upsampling convolutional generator: a linear projection to a
// (w, s/4, s/4) map, two nearest-neighbour 2x upsampling stages with 3x3
// convolutions, and a tanh output so that pixels stay in [-1, 1].
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const GeneratorSpec& spec);

  torch::Tensor forward(const torch::Tensor& latents);
  const GeneratorSpec& spec() const { return spec_; }

 private:
  GeneratorSpec spec_;
  std::int64_t init_size_;
  torch::nn::Linear project_{nullptr};
  torch::nn::BatchNorm2d bn0_{nullptr};
  torch::nn::Conv2d conv1_{nullptr};
  torch::nn::BatchNorm2d bn1_{nullptr};
  torch::nn::Conv2d conv2_{nullptr};
  torch::nn::BatchNorm2d bn2_{nullptr};
  torch::nn::Conv2d conv3_{nullptr};
  torch::nn::BatchNorm2d bn3_{nullptr};
};
TORCH_MODULE(Generator);

// Common interface of every classifier in the zoo.
class ClassifierImpl : public torch::nn::Module {
 public:
  explicit ClassifierImpl(const ClassifierSpec& spec) : spec_(spec) {}
  ~ClassifierImpl() override = default;

  virtual ForwardResult forward_features(const torch::Tensor& images) = 0;
  torch::Tensor forward(const torch::Tensor& images) {
    return forward_features(images).logits;
  }
  const ClassifierSpec& spec() const { return spec_; }

 private:
  ClassifierSpec spec_;
};
using Classifier = std::shared_ptr<ClassifierImpl>;

// Deterministic for a given (spec, seed). Throws InvalidArgument when
// out_size is not a positive multiple of 4 or other fields are out of range.
Generator build_generator(const GeneratorSpec& spec, std::uint64_t seed);

Classifier build_classifier(const ClassifierSpec& spec, std::uint64_t seed);

// Validates the image batch against the classifier's spec before running it.
ForwardResult forward_classifier(ClassifierImpl& model, const torch::Tensor& images);

// Number of trainable scalars.
std::int64_t count_parameters(const torch::nn::Module& module);
// Trainable scalars plus floating-point running statistics (batch-norm means
// and variances). This is the count tabulated for the reference networks.
std::int64_t count_state_values(const torch::nn::Module& module);

// Eval mode and requires_grad(false) on every parameter.
void freeze(torch::nn::Module& module);

// Bitwise comparison of all parameters and buffers, keyed by name.
bool identical_state(const torch::nn::Module& a, const torch::nn::Module& b);
// Deep copy of all parameters and buffers, keyed by name.
std::vector<std::pair<std::string, torch::Tensor>> snapshot_state(
    const torch::nn::Module& module);

// Checkpoints are torch archives holding the spec fields, the seed, an epoch
// counter and every named parameter and buffer.
struct GeneratorCheckpoint {
  Generator model{nullptr};
  GeneratorSpec spec;
  std::uint64_t seed = 0;
  std::int64_t epoch = 0;
};

struct ClassifierCheckpoint {
  Classifier model;
  ClassifierSpec spec;
  std::uint64_t seed = 0;
  std::int64_t epoch = 0;
};

void save_generator(const std::filesystem::path& path, const Generator& model,
                    std::uint64_t seed, std::int64_t epoch);
GeneratorCheckpoint load_generator(const std::filesystem::path& path);

void save_classifier(const std::filesystem::path& path, const Classifier& model,
                     std::uint64_t seed, std::int64_t epoch);
ClassifierCheckpoint load_classifier(const std::filesystem::path& path);

}  // namespace dfkd::models
