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

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace dopeseg {

/// Row-major 2D grid.
template <class T>
struct Grid2 {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Grid2() = default;
  Grid2(int r, int c, T fill = T{})
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  T& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  const T& at(int r, int c) const {
    return data[static_cast<std::size_t>(r) * cols + c];
  }
  std::size_t size() const { return data.size(); }
  template <class U>
  bool same_shape(const Grid2<U>& o) const {
    return rows == o.rows && cols == o.cols;
  }
  friend bool operator==(const Grid2&, const Grid2&) = default;
};

/// 3D grid indexed (x, y, z) with x fastest: index = (z * ny + y) * nx + x.
template <class T>
struct Grid3 {
  int nx = 0;
  int ny = 0;
  int nz = 0;
  std::vector<T> data;

  Grid3() = default;
  Grid3(int x, int y, int z, T fill = T{})
      : nx(x), ny(y), nz(z), data(static_cast<std::size_t>(x) * y * z, fill) {}

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * ny + y) * nx + x;
  }
  T& at(int x, int y, int z) { return data[index(x, y, z)]; }
  const T& at(int x, int y, int z) const { return data[index(x, y, z)]; }
  std::size_t size() const { return data.size(); }
  template <class U>
  bool same_shape(const Grid3<U>& o) const {
    return nx == o.nx && ny == o.ny && nz == o.nz;
  }
  friend bool operator==(const Grid3&, const Grid3&) = default;
};

using BinaryMask = Grid2<std::uint8_t>;
using Image = Grid2<float>;

}  // namespace dopeseg
