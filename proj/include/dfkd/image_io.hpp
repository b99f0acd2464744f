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

namespace dfkd::image_io {

// Tiles a (n, C, H, W) batch in [-1, 1] into rows of `columns` tiles
// separated by `padding` black pixels. C must be 1 or 3.
torch::Tensor tile(const torch::Tensor& images, std::int64_t columns, std::int64_t padding = 2);

// Writes a (C, H, W) image in [-1, 1] as an 8-bit gray or RGB PNG.
void write_png(const std::filesystem::path& path, const torch::Tensor& image);

// Reads an 8-bit gray or RGB PNG back as a (C, H, W) uint8 tensor.
torch::Tensor read_png(const std::filesystem::path& path);

}  // namespace dfkd::image_io
