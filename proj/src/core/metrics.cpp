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

#include "dopeseg/metrics.hpp"

#include <array>
#include <cmath>
#include <cstdio>

namespace dopeseg::metrics {

OverlapCounts count_overlap(std::span<const std::uint8_t> a,
                            std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) {
    fail(ErrorCode::kShape, "mask size mismatch: " + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()));
  }
  OverlapCounts c;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool in_a = a[i] != 0;
    const bool in_b = b[i] != 0;
    c.a += in_a;
    c.b += in_b;
    c.intersection += in_a && in_b;
  }
  return c;
}

namespace {

double iou_from(const OverlapCounts& c) {
  const std::size_t uni = c.a + c.b - c.intersection;
  if (uni == 0) return 1.0;
  return static_cast<double>(c.intersection) / static_cast<double>(uni);
}

double dsc_from(const OverlapCounts& c) {
  const std::size_t denom = c.a + c.b;
  if (denom == 0) return 1.0;
  return 2.0 * static_cast<double>(c.intersection) / static_cast<double>(denom);
}

void check_shapes(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_shape(b)) {
    fail(ErrorCode::kShape, "mask shape mismatch: " + std::to_string(a.rows) +
                                "x" + std::to_string(a.cols) + " vs " +
                                std::to_string(b.rows) + "x" +
                                std::to_string(b.cols));
  }
}

}  // namespace

double iou(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  return iou_from(count_overlap(a, b));
}

double dsc(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  return dsc_from(count_overlap(a, b));
}

double iou(const BinaryMask& a, const BinaryMask& b) {
  check_shapes(a, b);
  return iou(std::span(a.data), std::span(b.data));
}

double dsc(const BinaryMask& a, const BinaryMask& b) {
  check_shapes(a, b);
  return dsc(std::span(a.data), std::span(b.data));
}

MetricPair compare(const BinaryMask& a, const BinaryMask& b) {
  check_shapes(a, b);
  const auto c = count_overlap(a.data, b.data);
  return {dsc_from(c), iou_from(c)};
}

std::vector<PlaneSummary> aggregate(std::span<const SliceRecord> records,
                                    std::span<const Plane> planes) {
  std::vector<PlaneSummary> rows;
  for (Plane p : planes) {
    PlaneSummary row{p, 0, {}};
    for (const auto& r : records) {
      if (r.plane != p) continue;
      ++row.count;
      row.mean.dsc += r.dsc;
      row.mean.iou += r.iou;
    }
    if (row.count == 0) {
      fail(ErrorCode::kValidation,
           "no metric records for plane " + std::string(to_string(p)));
    }
    row.mean.dsc /= static_cast<double>(row.count);
    row.mean.iou /= static_cast<double>(row.count);
    rows.push_back(row);
  }
  return rows;
}

std::vector<PlaneSummary> aggregate(std::span<const SliceRecord> records) {
  if (records.empty()) fail(ErrorCode::kValidation, "no metric records");
  std::vector<Plane> present;
  for (Plane p : {Plane::kSagittal, Plane::kAxial, Plane::kCoronal}) {
    for (const auto& r : records) {
      if (r.plane == p) {
        present.push_back(p);
        break;
      }
    }
  }
  return aggregate(records, present);
}

double round4(double v) { return std::round(v * 1e4) / 1e4; }

std::string format4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", round4(v));
  return buf;
}

}  // namespace dopeseg::metrics
