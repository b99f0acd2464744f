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

#include "dfkd/models.hpp"

#include <array>
#include <map>
#include <utility>
#include <vector>

#include "dfkd/errors.hpp"

namespace dfkd::models {
namespace nn = torch::nn;

namespace {

constexpr std::array<std::pair<Architecture, std::string_view>, 6> kArchNames{{
    {Architecture::kLeNet5, "LeNet5"},
    {Architecture::kLeNet5Half, "LeNet5Half"},
    {Architecture::kWResNet40_2, "WResNet-40-2"},
    {Architecture::kWResNet16_1, "WResNet-16-1"},
    {Architecture::kResNet34, "ResNet34"},
    {Architecture::kResNet18, "ResNet18"},
}};

torch::Tensor upsample2x(const torch::Tensor& x) {
  return torch::nn::functional::interpolate(
      x, torch::nn::functional::InterpolateFuncOptions()
             .scale_factor(std::vector<double>{2.0, 2.0})
             .mode(torch::kNearest));
}

nn::Conv2d conv3x3(std::int64_t in, std::int64_t out, std::int64_t stride) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false));
}

// ---------------------------------------------------------------------------
// LeNet5 and its half-width student.

class LeNet5 : public ClassifierImpl {
 public:
  LeNet5(const ClassifierSpec& spec, std::int64_t divisor) : ClassifierImpl(spec) {
    const auto c1 = 6 / divisor, c2 = 16 / divisor, c3 = 120 / divisor, f1 = 84 / divisor;
    conv1_ = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(spec.in_channels, c1, 5)));
    conv2_ = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(c1, c2, 5)));
    conv3_ = register_module("conv3", nn::Conv2d(nn::Conv2dOptions(c2, c3, 5)));
    fc1_ = register_module("fc1", nn::Linear(c3, f1));
    fc2_ = register_module("fc2", nn::Linear(f1, spec.num_classes));
  }

  ForwardResult forward_features(const torch::Tensor& x) override {
    auto h = torch::max_pool2d(torch::relu(conv1_(x)), 2);
    h = torch::max_pool2d(torch::relu(conv2_(h)), 2);
    h = torch::relu(conv3_(h)).flatten(1);
    auto features = torch::relu(fc1_(h));
    return {fc2_(features), features};
  }

 private:
  nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, conv3_{nullptr};
  nn::Linear fc1_{nullptr}, fc2_{nullptr};
};

// ---------------------------------------------------------------------------
// CIFAR-style ResNet (3x3 stem, no max pool).

class BasicBlockImpl : public nn::Module {
 public:
  BasicBlockImpl(std::int64_t in, std::int64_t out, std::int64_t stride)
      : conv1_(register_module("conv1", conv3x3(in, out, stride))),
        bn1_(register_module("bn1", nn::BatchNorm2d(out))),
        conv2_(register_module("conv2", conv3x3(out, out, 1))),
        bn2_(register_module("bn2", nn::BatchNorm2d(out))) {
    if (stride != 1 || in != out) {
      shortcut_ = register_module(
          "shortcut",
          nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, out, 1).stride(stride).bias(false)),
                         nn::BatchNorm2d(out)));
    }
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto h = torch::relu(bn1_(conv1_(x)));
    h = bn2_(conv2_(h));
    return torch::relu(h + (shortcut_ ? shortcut_->forward(x) : x));
  }

 private:
  nn::Conv2d conv1_;
  nn::BatchNorm2d bn1_;
  nn::Conv2d conv2_;
  nn::BatchNorm2d bn2_;
  nn::Sequential shortcut_{nullptr};
};
TORCH_MODULE(BasicBlock);

class ResNet : public ClassifierImpl {
 public:
  ResNet(const ClassifierSpec& spec, const std::array<int, 4>& blocks)
      : ClassifierImpl(spec) {
    stem_ = register_module("conv1", conv3x3(spec.in_channels, 64, 1));
    bn_ = register_module("bn1", nn::BatchNorm2d(64));
    std::int64_t in = 64;
    const std::array<std::int64_t, 4> widths{64, 128, 256, 512};
    for (std::size_t g = 0; g < widths.size(); ++g) {
      nn::Sequential stage;
      for (int b = 0; b < blocks[g]; ++b) {
        const std::int64_t stride = (g > 0 && b == 0) ? 2 : 1;
        stage->push_back(BasicBlock(in, widths[g], stride));
        in = widths[g];
      }
      stages_.push_back(register_module("layer" + std::to_string(g + 1), stage));
    }
    fc_ = register_module("fc", nn::Linear(512, spec.num_classes));
  }

  ForwardResult forward_features(const torch::Tensor& x) override {
    auto h = torch::relu(bn_(stem_(x)));
    for (auto& stage : stages_) h = stage->forward(h);
    auto features = torch::adaptive_avg_pool2d(h, {1, 1}).flatten(1);
    return {fc_(features), features};
  }

 private:
  nn::Conv2d stem_{nullptr};
  nn::BatchNorm2d bn_{nullptr};
  std::vector<nn::Sequential> stages_;
  nn::Linear fc_{nullptr};
};

// ---------------------------------------------------------------------------
// Wide ResNet (pre-activation blocks, no dropout).

class WideBlockImpl : public nn::Module {
 public:
  WideBlockImpl(std::int64_t in, std::int64_t out, std::int64_t stride)
      : bn1_(register_module("bn1", nn::BatchNorm2d(in))),
        conv1_(register_module("conv1", conv3x3(in, out, stride))),
        bn2_(register_module("bn2", nn::BatchNorm2d(out))),
        conv2_(register_module("conv2", conv3x3(out, out, 1))) {
    if (in != out) {
      shortcut_ = register_module(
          "shortcut", nn::Conv2d(nn::Conv2dOptions(in, out, 1).stride(stride).bias(false)));
    }
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto pre = torch::relu(bn1_(x));
    auto h = conv1_(pre);
    h = conv2_(torch::relu(bn2_(h)));
    return h + (shortcut_ ? shortcut_(pre) : x);
  }

 private:
  nn::BatchNorm2d bn1_;
  nn::Conv2d conv1_;
  nn::BatchNorm2d bn2_;
  nn::Conv2d conv2_;
  nn::Conv2d shortcut_{nullptr};
};
TORCH_MODULE(WideBlock);

class WideResNet : public ClassifierImpl {
 public:
  WideResNet(const ClassifierSpec& spec, int depth, int widen) : ClassifierImpl(spec) {
    const int per_group = (depth - 4) / 6;
    const std::array<std::int64_t, 4> widths{16, 16 * widen, 32 * widen, 64 * widen};
    stem_ = register_module("conv1", conv3x3(spec.in_channels, widths[0], 1));
    std::int64_t in = widths[0];
    for (std::size_t g = 0; g < 3; ++g) {
      nn::Sequential group;
      for (int b = 0; b < per_group; ++b) {
        const std::int64_t stride = (g > 0 && b == 0) ? 2 : 1;
        group->push_back(WideBlock(in, widths[g + 1], stride));
        in = widths[g + 1];
      }
      groups_.push_back(register_module("block" + std::to_string(g + 1), group));
    }
    bn_ = register_module("bn", nn::BatchNorm2d(in));
    fc_ = register_module("fc", nn::Linear(in, spec.num_classes));
  }

  ForwardResult forward_features(const torch::Tensor& x) override {
    auto h = stem_(x);
    for (auto& group : groups_) h = group->forward(h);
    h = torch::relu(bn_(h));
    auto features = torch::adaptive_avg_pool2d(h, {1, 1}).flatten(1);
    return {fc_(features), features};
  }

 private:
  nn::Conv2d stem_{nullptr};
  std::vector<nn::Sequential> groups_;
  nn::BatchNorm2d bn_{nullptr};
  nn::Linear fc_{nullptr};
};

void validate(const GeneratorSpec& spec) {
  if (spec.latent_dim <= 0) throw InvalidArgument("generator: latent_dim must be positive");
  if (spec.out_channels != 1 && spec.out_channels != 3) {
    throw InvalidArgument("generator: out_channels must be 1 or 3");
  }
  if (spec.out_size <= 0 || spec.out_size % 4 != 0) {
    throw InvalidArgument("generator: out_size must be a positive multiple of 4, got " +
                          std::to_string(spec.out_size));
  }
  if (spec.base_width < 2 || spec.base_width % 2 != 0) {
    throw InvalidArgument("generator: base_width must be an even number >= 2");
  }
}

void validate(const ClassifierSpec& spec) {
  if (spec.num_classes < 2) throw InvalidArgument("classifier: num_classes must be >= 2");
  if (spec.in_channels != 1 && spec.in_channels != 3) {
    throw InvalidArgument("classifier: in_channels must be 1 or 3");
  }
  const bool lenet = spec.architecture == Architecture::kLeNet5 ||
                     spec.architecture == Architecture::kLeNet5Half;
  if (lenet && spec.image_size != 32) {
    throw InvalidArgument("classifier: LeNet5 variants take 32x32 inputs");
  }
  if (spec.image_size < 8) throw InvalidArgument("classifier: image_size too small");
}

template <typename Archive>
void write_int(Archive& archive, const std::string& key, std::int64_t v) {
  archive.write(key, c10::IValue(v));
}

std::int64_t read_int(torch::serialize::InputArchive& archive, const std::string& key) {
  c10::IValue v;
  if (!archive.try_read(key, v) || !v.isInt()) {
    throw FormatError("checkpoint: missing integer field '" + key + "'");
  }
  return v.toInt();
}

std::string read_string(torch::serialize::InputArchive& archive, const std::string& key) {
  c10::IValue v;
  if (!archive.try_read(key, v) || !v.isString()) {
    throw FormatError("checkpoint: missing string field '" + key + "'");
  }
  return v.toStringRef();
}

void require_kind(torch::serialize::InputArchive& archive, const std::string& expected) {
  const auto kind = read_string(archive, "meta.kind");
  if (kind != expected) {
    throw FormatError("checkpoint: expected a " + expected + " checkpoint, found '" + kind + "'");
  }
}

torch::serialize::InputArchive open_archive(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw IoError("checkpoint not found: " + path.string());
  }
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw FormatError("checkpoint " + path.string() + " is unreadable: " + e.what_without_backtrace());
  }
  return archive;
}

}  // namespace

std::string_view to_string(Architecture arch) {
  for (const auto& [a, name] : kArchNames) {
    if (a == arch) return name;
  }
  return "unknown";
}

Architecture parse_architecture(std::string_view name) {
  for (const auto& [a, n] : kArchNames) {
    if (n == name) return a;
  }
  throw InvalidArgument("unknown architecture '" + std::string(name) + "'");
}

GeneratorImpl::GeneratorImpl(const GeneratorSpec& spec)
    : spec_(spec), init_size_(spec.out_size / 4) {
  validate(spec);
  const auto w = spec.base_width;
  project_ = register_module("project", nn::Linear(spec.latent_dim, w * init_size_ * init_size_));
  bn0_ = register_module("bn0", nn::BatchNorm2d(w));
  conv1_ = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(w, w, 3).padding(1)));
  bn1_ = register_module("bn1", nn::BatchNorm2d(w));
  conv2_ = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(w, w / 2, 3).padding(1)));
  bn2_ = register_module("bn2", nn::BatchNorm2d(w / 2));
  conv3_ = register_module("conv3",
                           nn::Conv2d(nn::Conv2dOptions(w / 2, spec.out_channels, 3).padding(1)));
  bn3_ = register_module("bn3", nn::BatchNorm2d(spec.out_channels));
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& latents) {
  if (latents.dim() != 2 || latents.size(1) != spec_.latent_dim) {
    throw InvalidArgument("generator: expected latents of shape (n, " +
                          std::to_string(spec_.latent_dim) + ")");
  }
  auto h = project_(latents).view({-1, spec_.base_width, init_size_, init_size_});
  h = upsample2x(bn0_(h));
  h = torch::leaky_relu(bn1_(conv1_(h)), 0.2);
  h = upsample2x(h);
  h = torch::leaky_relu(bn2_(conv2_(h)), 0.2);
  return torch::tanh(bn3_(conv3_(h)));
}

Generator build_generator(const GeneratorSpec& spec, std::uint64_t seed) {
  validate(spec);
  torch::manual_seed(seed);
  return Generator(spec);
}

Classifier build_classifier(const ClassifierSpec& spec, std::uint64_t seed) {
  validate(spec);
  torch::manual_seed(seed);
  switch (spec.architecture) {
    case Architecture::kLeNet5:
      return std::make_shared<LeNet5>(spec, 1);
    case Architecture::kLeNet5Half:
      return std::make_shared<LeNet5>(spec, 2);
    case Architecture::kWResNet40_2:
      return std::make_shared<WideResNet>(spec, 40, 2);
    case Architecture::kWResNet16_1:
      return std::make_shared<WideResNet>(spec, 16, 1);
    case Architecture::kResNet34:
      return std::make_shared<ResNet>(spec, std::array<int, 4>{3, 4, 6, 3});
    case Architecture::kResNet18:
      return std::make_shared<ResNet>(spec, std::array<int, 4>{2, 2, 2, 2});
  }
  throw InvalidArgument("unknown architecture");
}

ForwardResult forward_classifier(ClassifierImpl& model, const torch::Tensor& images) {
  const auto& spec = model.spec();
  if (images.dim() != 4 || images.size(1) != spec.in_channels ||
      images.size(2) != spec.image_size || images.size(3) != spec.image_size) {
    throw InvalidArgument("classifier: expected images of shape (n, " +
                          std::to_string(spec.in_channels) + ", " +
                          std::to_string(spec.image_size) + ", " +
                          std::to_string(spec.image_size) + ")");
  }
  return model.forward_features(images);
}

std::int64_t count_parameters(const torch::nn::Module& module) {
  std::int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

std::int64_t count_state_values(const torch::nn::Module& module) {
  std::int64_t n = count_parameters(module);
  for (const auto& b : module.buffers()) {
    if (b.is_floating_point()) n += b.numel();
  }
  return n;
}

void freeze(torch::nn::Module& module) {
  module.eval();
  for (auto& p : module.parameters()) p.set_requires_grad(false);
}

std::vector<std::pair<std::string, torch::Tensor>> snapshot_state(
    const torch::nn::Module& module) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : module.named_parameters()) {
    out.emplace_back(item.key(), item.value().detach().clone());
  }
  for (const auto& item : module.named_buffers()) {
    out.emplace_back(item.key(), item.value().detach().clone());
  }
  return out;
}

bool identical_state(const torch::nn::Module& a, const torch::nn::Module& b) {
  const auto sa = snapshot_state(a);
  const auto sb = snapshot_state(b);
  if (sa.size() != sb.size()) return false;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (sa[i].first != sb[i].first) return false;
    if (!sa[i].second.sizes().equals(sb[i].second.sizes())) return false;
    if (!torch::equal(sa[i].second, sb[i].second)) return false;
  }
  return true;
}

void save_generator(const std::filesystem::path& path, const Generator& model,
                    std::uint64_t seed, std::int64_t epoch) {
  torch::serialize::OutputArchive archive;
  const auto& spec = model->spec();
  archive.write("meta.kind", c10::IValue(std::string("generator")));
  write_int(archive, "meta.latent_dim", spec.latent_dim);
  write_int(archive, "meta.out_channels", spec.out_channels);
  write_int(archive, "meta.out_size", spec.out_size);
  write_int(archive, "meta.base_width", spec.base_width);
  write_int(archive, "meta.seed", static_cast<std::int64_t>(seed));
  write_int(archive, "meta.epoch", epoch);
  torch::serialize::OutputArchive weights;
  model->save(weights);
  archive.write("model", weights);
  archive.save_to(path.string());
}

GeneratorCheckpoint load_generator(const std::filesystem::path& path) {
  auto archive = open_archive(path);
  require_kind(archive, "generator");
  GeneratorCheckpoint ckpt;
  ckpt.spec.latent_dim = read_int(archive, "meta.latent_dim");
  ckpt.spec.out_channels = read_int(archive, "meta.out_channels");
  ckpt.spec.out_size = read_int(archive, "meta.out_size");
  ckpt.spec.base_width = read_int(archive, "meta.base_width");
  ckpt.seed = static_cast<std::uint64_t>(read_int(archive, "meta.seed"));
  ckpt.epoch = read_int(archive, "meta.epoch");
  ckpt.model = Generator(ckpt.spec);
  torch::serialize::InputArchive weights;
  archive.read("model", weights);
  ckpt.model->load(weights);
  return ckpt;
}

void save_classifier(const std::filesystem::path& path, const Classifier& model,
                     std::uint64_t seed, std::int64_t epoch) {
  torch::serialize::OutputArchive archive;
  const auto& spec = model->spec();
  archive.write("meta.kind", c10::IValue(std::string("classifier")));
  archive.write("meta.architecture", c10::IValue(std::string(to_string(spec.architecture))));
  write_int(archive, "meta.num_classes", spec.num_classes);
  write_int(archive, "meta.in_channels", spec.in_channels);
  write_int(archive, "meta.image_size", spec.image_size);
  write_int(archive, "meta.seed", static_cast<std::int64_t>(seed));
  write_int(archive, "meta.epoch", epoch);
  torch::serialize::OutputArchive weights;
  model->save(weights);
  archive.write("model", weights);
  archive.save_to(path.string());
}

ClassifierCheckpoint load_classifier(const std::filesystem::path& path) {
  auto archive = open_archive(path);
  require_kind(archive, "classifier");
  ClassifierCheckpoint ckpt;
  ckpt.spec.architecture = parse_architecture(read_string(archive, "meta.architecture"));
  ckpt.spec.num_classes = read_int(archive, "meta.num_classes");
  ckpt.spec.in_channels = read_int(archive, "meta.in_channels");
  ckpt.spec.image_size = read_int(archive, "meta.image_size");
  ckpt.seed = static_cast<std::uint64_t>(read_int(archive, "meta.seed"));
  ckpt.epoch = read_int(archive, "meta.epoch");
  ckpt.model = build_classifier(ckpt.spec, ckpt.seed);
  torch::serialize::InputArchive weights;
  archive.read("model", weights);
  ckpt.model->load(weights);
  return ckpt;
}

}  // namespace dfkd::models
