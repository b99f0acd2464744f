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
#include <optional>
#include <string_view>
#include <vector>

namespace dfkd::data {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr const char* kDataRootEnv = "DFKD_DATA_ROOT";

enum class DatasetKind { kMnist, kSvhn, kCifar10 };

std::string_view to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(std::string_view name);

// Images are float32 (n, C, H, W) scaled to [-1, 1]; labels are int64 (n).
struct Dataset {
  torch::Tensor images;
  torch::Tensor labels;

  std::int64_t size() const { return images.defined() ? images.size(0) : 0; }
};

struct SampleBatch {
  torch::Tensor images;
  torch::Tensor labels;  // undefined for unlabeled synthetic batches
};

struct DatasetSplits {
  Dataset train;
  Dataset test;
};

// Byte value v maps to v / 127.5 - 1.
torch::Tensor normalize_bytes(const torch::Tensor& bytes);
// Inverse of normalize_bytes, rounded to the nearest byte.
torch::Tensor denormalize_to_bytes(const torch::Tensor& images);

// Parses a big-endian IDX image/label file pair and pads each image with
// background to pad_to x pad_to (pass 0 to keep the stored size).
// Throws FormatError on a bad magic number or inconsistent header, IoError
// (with the byte offset) on a missing or truncated file.
Dataset load_mnist_idx(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path,
                       std::int64_t pad_to = 32);

// CIFAR-10 binary batches: records of one label byte followed by 3072 bytes
// of planar RGB.
Dataset load_cifar10_binary(const std::vector<std::filesystem::path>& files);

// SVHN cropped-digit MATLAB file (v5, optionally zlib-compressed) holding the
// variables X (32, 32, 3, n) uint8 and y (n, 1). Label 10 denotes digit 0.
Dataset load_svhn_mat(const std::filesystem::path& path);

// Loads the standard train/test files for a dataset from root:
//   MNIST:    {train,t10k}-{images-idx3,labels-idx1}-ubyte
//   CIFAR-10: data_batch_{1..5}.bin, test_batch.bin (optionally under
//             cifar-10-batches-bin/)
//   SVHN:     train_32x32.mat, test_32x32.mat
DatasetSplits load_dataset(DatasetKind kind, const std::filesystem::path& root);

// Explicit root if given, otherwise $DFKD_DATA_ROOT, otherwise "data/<name>".
std::filesystem::path resolve_data_root(DatasetKind kind,
                                        const std::optional<std::filesystem::path>& explicit_root);

// Walks a dataset once in batches. The shuffle order is a pure function of
// the seed; the last batch may be short.
class BatchIterator {
 public:
  BatchIterator(const Dataset& dataset, std::int64_t batch_size, std::uint64_t seed,
                bool shuffle);

  std::size_t num_batches() const;
  bool has_next() const { return cursor_ < order_.size(); }
  SampleBatch next();
  const std::vector<std::int64_t>& order() const { return order_; }

 private:
  const Dataset* dataset_;
  std::int64_t batch_size_;
  std::vector<std::int64_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace dfkd::data
