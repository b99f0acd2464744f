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

#include "dfkd/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <span>
#include <sstream>

#include "dfkd/errors.hpp"

namespace dfkd::data {
namespace {

std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex;
  os.width(8);
  os.fill('0');
  os << v;
  return os.str();
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string(), 0);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Bounds-checked cursor over an in-memory file.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string name)
      : bytes_(bytes), name_(std::move(name)) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > bytes_.size() - pos_) {
      throw IoError(name_ + ": truncated at byte offset " + std::to_string(bytes_.size()) +
                        " (needed " + std::to_string(n) + " bytes at offset " +
                        std::to_string(pos_) + ")",
                    static_cast<std::int64_t>(bytes_.size()));
    }
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::uint32_t be32() {
    const auto b = take(4);
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
           (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
  }

  std::uint32_t le32() {
    const auto b = take(4);
    return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
           (std::uint32_t{b[3]} << 24);
  }

  void align8() {
    const auto pad = (8 - pos_ % 8) % 8;
    if (pad != 0 && pos_ + pad <= bytes_.size()) pos_ += pad;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

torch::Tensor bytes_to_tensor(std::span<const std::uint8_t> bytes, at::IntArrayRef shape) {
  auto t = torch::empty(shape, torch::kUInt8);
  std::memcpy(t.data_ptr<std::uint8_t>(), bytes.data(), bytes.size());
  return t;
}

// Pads with raw value 0, which normalizes to the -1 background.
torch::Tensor pad_images(const torch::Tensor& images, std::int64_t pad_to) {
  const auto h = images.size(2), w = images.size(3);
  if (pad_to == 0 || (h == pad_to && w == pad_to)) return images;
  if (h > pad_to || w > pad_to) {
    throw InvalidArgument("cannot pad " + std::to_string(h) + "x" + std::to_string(w) +
                          " images to " + std::to_string(pad_to));
  }
  const auto top = (pad_to - h) / 2, left = (pad_to - w) / 2;
  return torch::constant_pad_nd(images, {left, pad_to - w - left, top, pad_to - h - top}, -1.0);
}

// --- MATLAB v5 ---------------------------------------------------------------

constexpr std::uint32_t kMiInt8 = 1;
constexpr std::uint32_t kMiUInt8 = 2;
constexpr std::uint32_t kMiInt32 = 5;
constexpr std::uint32_t kMiUInt32 = 6;
constexpr std::uint32_t kMiDouble = 9;
constexpr std::uint32_t kMiMatrix = 14;
constexpr std::uint32_t kMiCompressed = 15;

struct MatVariable {
  std::string name;
  std::vector<std::int64_t> dims;  // column-major
  std::uint32_t type = 0;
  std::vector<std::uint8_t> data;
};

struct MatTag {
  std::uint32_t type;
  std::uint32_t bytes;
  bool small;
};

MatTag read_tag(ByteReader& r) {
  const auto word = r.le32();
  if ((word >> 16) != 0) return {word & 0xFFFF, word >> 16, true};
  return {word, r.le32(), false};
}

std::vector<std::uint8_t> read_payload(ByteReader& r, const MatTag& tag) {
  const auto raw = r.take(tag.small ? 4 : tag.bytes);
  std::vector<std::uint8_t> out(raw.begin(), raw.begin() + tag.bytes);
  if (!tag.small) r.align8();
  return out;
}

std::vector<std::uint8_t> inflate_all(std::span<const std::uint8_t> in, const std::string& name) {
  std::vector<std::uint8_t> out;
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) throw FormatError(name + ": zlib init failed");
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  std::vector<std::uint8_t> chunk(1 << 20);
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk.data();
    zs.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw FormatError(name + ": corrupt compressed element");
    }
    out.insert(out.end(), chunk.begin(), chunk.begin() + (chunk.size() - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) break;
  }
  inflateEnd(&zs);
  return out;
}

MatVariable parse_matrix(std::span<const std::uint8_t> body, const std::string& name) {
  ByteReader r(body, name);
  MatVariable var;
  read_payload(r, read_tag(r));  // array flags
  const auto dims_tag = read_tag(r);
  const auto dims_raw = read_payload(r, dims_tag);
  if (dims_tag.type != kMiInt32) throw FormatError(name + ": unexpected dimension type");
  for (std::size_t i = 0; i + 4 <= dims_raw.size(); i += 4) {
    std::int32_t d;
    std::memcpy(&d, dims_raw.data() + i, 4);
    var.dims.push_back(d);
  }
  const auto name_raw = read_payload(r, read_tag(r));
  var.name.assign(name_raw.begin(), name_raw.end());
  const auto data_tag = read_tag(r);
  var.type = data_tag.type;
  var.data = read_payload(r, data_tag);
  return var;
}

std::vector<MatVariable> read_mat_file(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const auto name = path.string();
  ByteReader r(bytes, name);
  const auto header = r.take(128);
  if (header[126] != 'I' || header[127] != 'M') {
    throw FormatError(name + ": not a little-endian MATLAB v5 file");
  }
  std::vector<MatVariable> vars;
  while (r.remaining() >= 8) {
    const auto tag = read_tag(r);
    const auto body = r.take(tag.bytes);
    if (tag.type == kMiCompressed) {
      const auto inner = inflate_all(body, name);
      ByteReader ir(inner, name);
      const auto itag = read_tag(ir);
      if (itag.type != kMiMatrix) throw FormatError(name + ": compressed element is not a matrix");
      vars.push_back(parse_matrix(ir.take(itag.bytes), name));
    } else if (tag.type == kMiMatrix) {
      vars.push_back(parse_matrix(body, name));
      r.align8();
    } else {
      r.align8();
    }
  }
  return vars;
}

const MatVariable& find_var(const std::vector<MatVariable>& vars, const std::string& want,
                            const std::string& file) {
  for (const auto& v : vars) {
    if (v.name == want) return v;
  }
  throw FormatError(file + ": variable '" + want + "' not found");
}

}  // namespace

std::string_view to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::kMnist:
      return "MNIST";
    case DatasetKind::kSvhn:
      return "SVHN";
    case DatasetKind::kCifar10:
      return "CIFAR10";
  }
  return "unknown";
}

DatasetKind parse_dataset_kind(std::string_view name) {
  if (name == "MNIST") return DatasetKind::kMnist;
  if (name == "SVHN") return DatasetKind::kSvhn;
  if (name == "CIFAR10" || name == "CIFAR-10") return DatasetKind::kCifar10;
  throw InvalidArgument("unknown dataset '" + std::string(name) + "'");
}

torch::Tensor normalize_bytes(const torch::Tensor& bytes) {
  return bytes.to(torch::kFloat32) / 127.5f - 1.0f;
}

torch::Tensor denormalize_to_bytes(const torch::Tensor& images) {
  return ((images.to(torch::kFloat64) + 1.0) * 127.5).round().clamp(0, 255).to(torch::kUInt8);
}

Dataset load_mnist_idx(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path, std::int64_t pad_to) {
  const auto image_bytes = read_file(images_path);
  const auto label_bytes = read_file(labels_path);

  ByteReader ir(image_bytes, images_path.string());
  const auto image_magic = ir.be32();
  if (image_magic != kIdxImageMagic) {
    throw FormatError(images_path.string() + ": bad IDX image magic " + hex32(image_magic) +
                      " (expected " + hex32(kIdxImageMagic) + ")");
  }
  const auto n = ir.be32();
  const auto rows = ir.be32();
  const auto cols = ir.be32();

  ByteReader lr(label_bytes, labels_path.string());
  const auto label_magic = lr.be32();
  if (label_magic != kIdxLabelMagic) {
    throw FormatError(labels_path.string() + ": bad IDX label magic " + hex32(label_magic) +
                      " (expected " + hex32(kIdxLabelMagic) + ")");
  }
  const auto n_labels = lr.be32();
  if (n_labels != n) {
    throw FormatError("IDX image count " + std::to_string(n) + " does not match label count " +
                      std::to_string(n_labels));
  }

  const auto pixels = ir.take(std::size_t{n} * rows * cols);
  const auto labels = lr.take(n);

  Dataset ds;
  const auto raw = bytes_to_tensor(pixels, {static_cast<std::int64_t>(n), 1,
                                            static_cast<std::int64_t>(rows),
                                            static_cast<std::int64_t>(cols)});
  ds.images = pad_images(normalize_bytes(raw), pad_to).contiguous();
  ds.labels = bytes_to_tensor(labels, {static_cast<std::int64_t>(n)}).to(torch::kInt64);
  return ds;
}

Dataset load_cifar10_binary(const std::vector<std::filesystem::path>& files) {
  constexpr std::size_t kRecord = 1 + 3 * 32 * 32;
  std::vector<torch::Tensor> images, labels;
  for (const auto& file : files) {
    const auto bytes = read_file(file);
    if (bytes.size() % kRecord != 0) {
      throw IoError(file.string() + ": size " + std::to_string(bytes.size()) +
                        " is not a whole number of records",
                    static_cast<std::int64_t>(bytes.size() - bytes.size() % kRecord));
    }
    const auto n = static_cast<std::int64_t>(bytes.size() / kRecord);
    const auto all = bytes_to_tensor(bytes, {n, static_cast<std::int64_t>(kRecord)});
    labels.push_back(all.select(1, 0).to(torch::kInt64));
    images.push_back(normalize_bytes(all.slice(1, 1).reshape({n, 3, 32, 32})));
  }
  if (images.empty()) throw InvalidArgument("load_cifar10_binary: no files given");
  return {torch::cat(images).contiguous(), torch::cat(labels)};
}

Dataset load_svhn_mat(const std::filesystem::path& path) {
  const auto vars = read_mat_file(path);
  const auto& x = find_var(vars, "X", path.string());
  const auto& y = find_var(vars, "y", path.string());
  if (x.type != kMiUInt8 || x.dims.size() != 4 || x.dims[2] != 3) {
    throw FormatError(path.string() + ": X must be a (H, W, 3, n) uint8 array");
  }
  const auto h = x.dims[0], w = x.dims[1], n = x.dims[3];
  if (static_cast<std::int64_t>(x.data.size()) != h * w * 3 * n) {
    throw FormatError(path.string() + ": X payload size does not match its dimensions");
  }
  // Column-major (h, w, c, n) is row-major (n, c, w, h).
  auto raw = bytes_to_tensor(x.data, {n, 3, w, h}).permute({0, 1, 3, 2});

  torch::Tensor labels;
  if (y.type == kMiDouble) {
    labels = torch::empty({static_cast<std::int64_t>(y.data.size() / 8)}, torch::kFloat64);
    std::memcpy(labels.data_ptr<double>(), y.data.data(), y.data.size());
    labels = labels.to(torch::kInt64);
  } else if (y.type == kMiUInt8) {
    labels = bytes_to_tensor(y.data, {static_cast<std::int64_t>(y.data.size())}).to(torch::kInt64);
  } else {
    throw FormatError(path.string() + ": y must be double or uint8");
  }
  if (labels.size(0) != n) {
    throw FormatError(path.string() + ": label count does not match image count");
  }
  labels = torch::where(labels == 10, torch::zeros_like(labels), labels);
  return {normalize_bytes(raw).contiguous(), labels};
}

DatasetSplits load_dataset(DatasetKind kind, const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) {
    throw IoError("dataset directory not found: " + root.string());
  }
  switch (kind) {
    case DatasetKind::kMnist:
      return {load_mnist_idx(root / "train-images-idx3-ubyte", root / "train-labels-idx1-ubyte"),
              load_mnist_idx(root / "t10k-images-idx3-ubyte", root / "t10k-labels-idx1-ubyte")};
    case DatasetKind::kCifar10: {
      auto base = root;
      if (std::filesystem::is_directory(root / "cifar-10-batches-bin")) {
        base = root / "cifar-10-batches-bin";
      }
      std::vector<std::filesystem::path> train;
      for (int i = 1; i <= 5; ++i) train.push_back(base / ("data_batch_" + std::to_string(i) + ".bin"));
      return {load_cifar10_binary(train), load_cifar10_binary({base / "test_batch.bin"})};
    }
    case DatasetKind::kSvhn:
      return {load_svhn_mat(root / "train_32x32.mat"), load_svhn_mat(root / "test_32x32.mat")};
  }
  throw InvalidArgument("unknown dataset kind");
}

std::filesystem::path resolve_data_root(
    DatasetKind kind, const std::optional<std::filesystem::path>& explicit_root) {
  if (explicit_root && !explicit_root->empty()) return *explicit_root;
  if (const char* env = std::getenv(kDataRootEnv); env != nullptr && *env != '\0') {
    return env;
  }
  std::string name(to_string(kind));
  std::transform(name.begin(), name.end(), name.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return std::filesystem::path("data") / name;
}

BatchIterator::BatchIterator(const Dataset& dataset, std::int64_t batch_size,
                             std::uint64_t seed, bool shuffle)
    : dataset_(&dataset), batch_size_(batch_size) {
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  order_.resize(static_cast<std::size_t>(dataset.size()));
  std::iota(order_.begin(), order_.end(), std::int64_t{0});
  if (shuffle) {
    std::mt19937_64 rng(seed);
    std::shuffle(order_.begin(), order_.end(), rng);
  }
}

std::size_t BatchIterator::num_batches() const {
  const auto b = static_cast<std::size_t>(batch_size_);
  return (order_.size() + b - 1) / b;
}

SampleBatch BatchIterator::next() {
  if (!has_next()) throw StateError("BatchIterator: exhausted");
  const auto end = std::min(order_.size(), cursor_ + static_cast<std::size_t>(batch_size_));
  const auto count = static_cast<std::int64_t>(end - cursor_);
  auto index = torch::from_blob(order_.data() + cursor_, {count}, torch::kInt64).clone();
  cursor_ = end;
  SampleBatch batch;
  batch.images = dataset_->images.index_select(0, index);
  if (dataset_->labels.defined()) batch.labels = dataset_->labels.index_select(0, index);
  return batch;
}

}  // namespace dfkd::data
