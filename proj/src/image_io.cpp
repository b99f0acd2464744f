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

#include "dfkd/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

#include "dfkd/data.hpp"
#include "dfkd/errors.hpp"

namespace dfkd::image_io {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

// libpng prints to stderr by default; errors surface as exceptions instead.
void quiet_error(png_structp png, png_const_charp) { png_longjmp(png, 1); }
void quiet_warning(png_structp, png_const_charp) {}

}  // namespace

torch::Tensor tile(const torch::Tensor& images, std::int64_t columns, std::int64_t padding) {
  if (!images.defined() || images.dim() != 4) throw InvalidArgument("tile: expected (n, C, H, W)");
  if (columns < 1 || padding < 0) throw InvalidArgument("tile: bad layout");
  const auto n = images.size(0), c = images.size(1), h = images.size(2), w = images.size(3);
  const auto cols = std::min(columns, std::max<std::int64_t>(n, 1));
  const auto rows = (n + cols - 1) / cols;
  auto canvas = torch::full({c, rows * (h + padding) + padding, cols * (w + padding) + padding},
                            -1.0, images.options().dtype(torch::kFloat32));
  for (std::int64_t i = 0; i < n; ++i) {
    const auto y = padding + (i / cols) * (h + padding);
    const auto x = padding + (i % cols) * (w + padding);
    canvas.slice(1, y, y + h).slice(2, x, x + w).copy_(images[i]);
  }
  return canvas;
}

void write_png(const std::filesystem::path& path, const torch::Tensor& image) {
  if (!image.defined() || image.dim() != 3 || (image.size(0) != 1 && image.size(0) != 3)) {
    throw InvalidArgument("write_png: expected a (1|3, H, W) image");
  }
  const auto bytes = data::denormalize_to_bytes(image.clamp(-1.0, 1.0))
                         .permute({1, 2, 0})
                         .contiguous()
                         .to(torch::kUInt8);
  const auto channels = static_cast<int>(image.size(0));
  const auto height = static_cast<png_uint_32>(image.size(1));
  const auto width = static_cast<png_uint_32>(image.size(2));

  File f(std::fopen(path.string().c_str(), "wb"));
  if (!f) throw IoError("write_png: cannot open " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, quiet_error, quiet_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("write_png: libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("write_png: libpng failed writing " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, width, height, 8, channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  auto* base = bytes.data_ptr<std::uint8_t>();
  for (png_uint_32 y = 0; y < height; ++y) {
    png_write_row(png, base + static_cast<std::size_t>(y) * width * channels);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

torch::Tensor read_png(const std::filesystem::path& path) {
  File f(std::fopen(path.string().c_str(), "rb"));
  if (!f) throw IoError("read_png: cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, quiet_error, quiet_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("read_png: libpng initialization failed");
  }
  torch::Tensor out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("read_png: " + path.string() + " is not a readable PNG");
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  const auto width = png_get_image_width(png, info);
  const auto height = png_get_image_height(png, info);
  const auto color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) != 8 ||
      (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_RGB)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("read_png: only 8-bit gray or RGB images are supported");
  }
  const std::int64_t channels = color == PNG_COLOR_TYPE_GRAY ? 1 : 3;
  out = torch::empty({static_cast<std::int64_t>(height), static_cast<std::int64_t>(width), channels},
                     torch::kUInt8);
  auto* base = out.data_ptr<std::uint8_t>();
  for (png_uint_32 y = 0; y < height; ++y) {
    png_read_row(png, base + static_cast<std::size_t>(y) * width * channels, nullptr);
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out.permute({2, 0, 1}).contiguous();
}

}  // namespace dfkd::image_io
