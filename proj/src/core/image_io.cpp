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

#include "dopeseg/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "dopeseg/common.hpp"

namespace dopeseg::image_io {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open(const std::filesystem::path& path, const char* mode) {
  if (mode[0] == 'w' && path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  File f(std::fopen(path.c_str(), mode));
  if (!f) fail(mode[0] == 'r' ? ErrorCode::kNotFound : ErrorCode::kIo,
               "cannot open " + path.string());
  return f;
}

// Rows are tightly packed; 16-bit samples are big-endian, as PNG requires.
void write_png(const std::filesystem::path& path, int rows, int cols, int color_type,
               int bit_depth, const std::vector<std::uint8_t>& packed) {
  File f = open(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail(ErrorCode::kIo, "libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::kIo, "failed encoding " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, cols, rows, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = packed.size() / rows;
  for (int r = 0; r < rows; ++r) {
    png_write_row(png, const_cast<png_bytep>(packed.data() + r * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

struct Decoded {
  int rows = 0;
  int cols = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint8_t> packed;
};

Decoded read_png(const std::filesystem::path& path) {
  File f = open(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(ErrorCode::kIo, "libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::kIo, "failed decoding " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  Decoded d;
  d.rows = static_cast<int>(png_get_image_height(png, info));
  d.cols = static_cast<int>(png_get_image_width(png, info));
  d.channels = png_get_channels(png, info);
  d.bit_depth = png_get_bit_depth(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  d.packed.resize(stride * d.rows);
  for (int r = 0; r < d.rows; ++r) png_read_row(png, d.packed.data() + r * stride, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return d;
}

}  // namespace

void write_gray16(const std::filesystem::path& path, const Image& image) {
  std::vector<std::uint8_t> packed(image.size() * 2);
  for (std::size_t i = 0; i < image.size(); ++i) {
    const auto v = static_cast<std::uint16_t>(
        std::lround(std::clamp(image.data[i], 0.0f, 1.0f) * 65535.0));
    packed[2 * i] = static_cast<std::uint8_t>(v >> 8);
    packed[2 * i + 1] = static_cast<std::uint8_t>(v & 0xff);
  }
  write_png(path, image.rows, image.cols, PNG_COLOR_TYPE_GRAY, 16, packed);
}

Image read_gray16(const std::filesystem::path& path) {
  const Decoded d = read_png(path);
  if (d.channels != 1) fail(ErrorCode::kIo, path.string() + " is not grayscale");
  Image img(d.rows, d.cols);
  for (std::size_t i = 0; i < img.size(); ++i) {
    img.data[i] = d.bit_depth == 16
                      ? static_cast<float>(((d.packed[2 * i] << 8) | d.packed[2 * i + 1]) / 65535.0)
                      : static_cast<float>(d.packed[i] / 255.0);
  }
  return img;
}

void write_mask(const std::filesystem::path& path, const BinaryMask& mask) {
  std::vector<std::uint8_t> packed(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) packed[i] = mask.data[i] ? 255 : 0;
  write_png(path, mask.rows, mask.cols, PNG_COLOR_TYPE_GRAY, 8, packed);
}

BinaryMask read_mask(const std::filesystem::path& path) {
  const Decoded d = read_png(path);
  if (d.channels != 1 || d.bit_depth != 8) {
    fail(ErrorCode::kIo, path.string() + " is not an 8-bit grayscale mask");
  }
  BinaryMask m(d.rows, d.cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = d.packed[i] ? 1 : 0;
  return m;
}

void write_rgb(const std::filesystem::path& path, const RgbImage& image) {
  write_png(path, image.rows, image.cols, PNG_COLOR_TYPE_RGB, 8, image.data);
}

RgbImage read_rgb(const std::filesystem::path& path) {
  const Decoded d = read_png(path);
  if (d.channels != 3 || d.bit_depth != 8) fail(ErrorCode::kIo, path.string() + " is not RGB8");
  RgbImage img(d.rows, d.cols);
  img.data = d.packed;
  return img;
}

}  // namespace dopeseg::image_io
