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

#include "fixtures.hpp"

#include <torch/torch.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <random>
#include <stdexcept>

namespace dfkd::testing {
namespace fs = std::filesystem;

namespace {
std::atomic<int> counter{0};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::vector<std::uint8_t> toy_pixels(const torch::Tensor& labels, std::int64_t side,
                                     std::uint64_t seed) {
  // Class c lights a 6x6 square at a class-specific position.
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 20.0);
  const auto n = labels.size(0);
  std::vector<std::uint8_t> px(static_cast<std::size_t>(n * side * side));
  for (std::int64_t i = 0; i < n; ++i) {
    const auto c = labels[i].item<std::int64_t>();
    const auto y0 = 2 + (c / 5) * (side / 2), x0 = 2 + (c % 5) * (side / 6);
    for (std::int64_t y = 0; y < side; ++y) {
      for (std::int64_t x = 0; x < side; ++x) {
        const bool on = y >= y0 && y < y0 + 6 && x >= x0 && x < x0 + 4;
        const double v = (on ? 220.0 : 20.0) + noise(rng);
        px[static_cast<std::size_t>((i * side + y) * side + x)] =
            static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
    }
  }
  return px;
}
}  // namespace

TempDir::TempDir(const std::string& prefix) {
  std::random_device rd;
  for (int attempt = 0; attempt < 100; ++attempt) {
    auto p = fs::temp_directory_path() /
             (prefix + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    if (fs::create_directory(p)) {
      path_ = p;
      return;
    }
  }
  throw std::runtime_error("cannot create temp dir");
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> idx_images(std::uint32_t magic, std::uint32_t n, std::uint32_t rows,
                                     std::uint32_t cols, const std::vector<std::uint8_t>& pixels) {
  std::vector<std::uint8_t> out;
  put_u32(out, magic);
  put_u32(out, n);
  put_u32(out, rows);
  put_u32(out, cols);
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

std::vector<std::uint8_t> idx_labels(std::uint32_t magic, const std::vector<std::uint8_t>& labels) {
  std::vector<std::uint8_t> out;
  put_u32(out, magic);
  put_u32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

RawImages random_raw_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> byte(0, 255), label(0, 9);
  RawImages r;
  r.pixels.resize(static_cast<std::size_t>(n) * rows * cols);
  for (auto& p : r.pixels) p = static_cast<std::uint8_t>(byte(rng));
  r.labels.resize(n);
  for (auto& l : r.labels) l = static_cast<std::uint8_t>(label(rng));
  return r;
}

data::Dataset toy_digits(std::int64_t n, std::uint64_t seed) {
  auto labels = torch::arange(n, torch::kInt64).remainder(10);
  const auto px = toy_pixels(labels, 32, seed);
  auto bytes = torch::from_blob(const_cast<std::uint8_t*>(px.data()), {n, 1, 32, 32}, torch::kUInt8)
                   .clone();
  return {data::normalize_bytes(bytes), labels};
}

void write_toy_mnist(const fs::path& dir, std::int64_t n_train, std::int64_t n_test,
                     std::uint64_t seed) {
  fs::create_directories(dir);
  auto emit = [&](const std::string& stem_img, const std::string& stem_lbl, std::int64_t n,
                  std::uint64_t s) {
    auto labels = torch::arange(n, torch::kInt64).remainder(10);
    const auto px = toy_pixels(labels, 28, s);
    std::vector<std::uint8_t> lb(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) lb[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(i % 10);
    write_bytes(dir / stem_img, idx_images(data::kIdxImageMagic, static_cast<std::uint32_t>(n), 28, 28, px));
    write_bytes(dir / stem_lbl, idx_labels(data::kIdxLabelMagic, lb));
  };
  emit("train-images-idx3-ubyte", "train-labels-idx1-ubyte", n_train, seed);
  emit("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", n_test, seed + 1);
}

}  // namespace dfkd::testing
