// Copyright 2026 The DopeSeg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// PNG encode/decode for slices, masks and figure panels (libpng).

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dopeseg/grid.hpp"

namespace dopeseg::image_io {

/// 16-bit grayscale; [0,1] maps linearly onto [0, 65535].
void write_gray16(const std::filesystem::path& path, const Image& image);
Image read_gray16(const std::filesystem::path& path);

/// 8-bit grayscale mask stored as 0/255; reads back any nonzero as 1.
void write_mask(const std::filesystem::path& path, const BinaryMask& mask);
BinaryMask read_mask(const std::filesystem::path& path);

struct RgbImage {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> data;  // rows * cols * 3

  RgbImage() = default;
  RgbImage(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c * 3, 0) {}
  std::uint8_t* px(int r, int c) { return data.data() + (static_cast<std::size_t>(r) * cols + c) * 3; }
};

void write_rgb(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_rgb(const std::filesystem::path& path);

}  // namespace dopeseg::image_io
