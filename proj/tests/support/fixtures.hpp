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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dfkd/data.hpp"

namespace dfkd::testing {

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& prefix = "dfkd");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

// Big-endian IDX files as used by MNIST.
std::vector<std::uint8_t> idx_images(std::uint32_t magic, std::uint32_t n, std::uint32_t rows,
                                     std::uint32_t cols, const std::vector<std::uint8_t>& pixels);
std::vector<std::uint8_t> idx_labels(std::uint32_t magic, const std::vector<std::uint8_t>& labels);

// Random uint8 pixels and labels in [0, 10).
struct RawImages {
  std::vector<std::uint8_t> pixels;
  std::vector<std::uint8_t> labels;
};
RawImages random_raw_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                            std::uint64_t seed);

// A labeled MNIST-shaped (n, 1, 32, 32) dataset of random blobs, one template
// per class plus noise, so a classifier can learn it in a few steps.
data::Dataset toy_digits(std::int64_t n, std::uint64_t seed);

// Writes toy_digits as the four standard MNIST IDX files (28x28) into dir.
void write_toy_mnist(const std::filesystem::path& dir, std::int64_t n_train, std::int64_t n_test,
                     std::uint64_t seed);

}  // namespace dfkd::testing
