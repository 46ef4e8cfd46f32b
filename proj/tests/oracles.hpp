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


// Reference implementations the tests compare the library against. They are
// written for clarity, not speed, and share no code with src/.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <set>
#include <span>
#include <vector>

namespace oracle {

inline std::set<std::size_t> foreground(std::span<const std::uint8_t> m) {
  std::set<std::size_t> s;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i]) s.insert(i);
  }
  return s;
}

struct SetScores {
  double iou;
  double dsc;
};

// |A n B| / |A u B| and 2|A n B| / (|A| + |B|) on index sets; both are 1
// for two empty masks.
inline SetScores set_scores(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  const auto sa = foreground(a);
  const auto sb = foreground(b);
  std::vector<std::size_t> inter;
  std::vector<std::size_t> uni;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(inter));
  std::set_union(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(uni));
  if (uni.empty()) return {1.0, 1.0};
  return {static_cast<double>(inter.size()) / static_cast<double>(uni.size()),
          2.0 * static_cast<double>(inter.size()) / static_cast<double>(sa.size() + sb.size())};
}

// Ellipsoid membership as a quadratic form d^T R diag(1/a^2) R^T d <= 1 with
// R the rotation about z by yaw.
inline bool in_ellipsoid(const std::array<double, 3>& p, const std::array<double, 3>& c,
                         const std::array<double, 3>& a, double yaw) {
  const double cs = std::cos(yaw);
  const double sn = std::sin(yaw);
  const double r[3][3] = {{cs, -sn, 0}, {sn, cs, 0}, {0, 0, 1}};
  double q[3][3] = {};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) q[i][j] += r[i][k] * r[j][k] / (a[k] * a[k]);
    }
  }
  const double d[3] = {p[0] - c[0], p[1] - c[1], p[2] - c[2]};
  double v = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) v += d[i] * q[i][j] * d[j];
  }
  return v <= 1.0;
}

// Distance from p to the line through o with direction u, via |d x u| / |u|.
inline double line_distance(const std::array<double, 3>& p, const std::array<double, 3>& o,
                            const std::array<double, 3>& u) {
  const double d[3] = {p[0] - o[0], p[1] - o[1], p[2] - o[2]};
  const double cx = d[1] * u[2] - d[2] * u[1];
  const double cy = d[2] * u[0] - d[0] * u[2];
  const double cz = d[0] * u[1] - d[1] * u[0];
  return std::sqrt(cx * cx + cy * cy + cz * cz) /
         std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
}

// Soft dice loss, batch mean, in double.
inline double dice_loss(const std::vector<double>& p, const std::vector<double>& t, int batch,
                        double smooth) {
  const std::size_t per = p.size() / batch;
  double loss = 0.0;
  for (int n = 0; n < batch; ++n) {
    double inter = 0.0;
    double sum = 0.0;
    for (std::size_t i = n * per; i < (n + 1) * per; ++i) {
      inter += p[i] * t[i];
      sum += p[i] + t[i];
    }
    loss += 1.0 - (2.0 * inter + smooth) / (sum + smooth);
  }
  return loss / batch;
}

// Parameter count of the plain U-Net: two 3x3 conv + BN blocks per encoder
// and decoder level, a 3x3 conv + BN after each upsampling, 1x1 head.
inline std::size_t unet_params(int depth, int width) {
  auto cbr = [](std::size_t cin, std::size_t cout) { return 9 * cin * cout + 2 * cout; };
  auto w = [&](int level) { return static_cast<std::size_t>(width) << level; };
  std::size_t n = 0;
  for (int i = 0; i <= depth; ++i) {
    const std::size_t cin = i == 0 ? 1 : w(i - 1);
    n += cbr(cin, w(i)) + cbr(w(i), w(i));
  }
  for (int i = 0; i < depth; ++i) {
    n += cbr(w(i + 1), w(i));
    n += cbr(2 * w(i), w(i)) + cbr(w(i), w(i));
  }
  return n + w(0) + 1;
}

}  // namespace oracle
