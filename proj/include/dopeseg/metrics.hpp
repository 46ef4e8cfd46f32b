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

// Overlap metrics between binary masks and their per-plane aggregation.
//
// Both metrics treat a pair of empty masks as a perfect match (1.0).

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dopeseg/common.hpp"
#include "dopeseg/grid.hpp"

namespace dopeseg::metrics {

struct MetricPair {
  double dsc = 0.0;
  double iou = 0.0;
};

struct OverlapCounts {
  std::size_t a = 0;
  std::size_t b = 0;
  std::size_t intersection = 0;
};

/// Counts |A|, |B| and |A n B|; any nonzero byte is foreground.
OverlapCounts count_overlap(std::span<const std::uint8_t> a,
                            std::span<const std::uint8_t> b);

double iou(const BinaryMask& a, const BinaryMask& b);
double dsc(const BinaryMask& a, const BinaryMask& b);
MetricPair compare(const BinaryMask& a, const BinaryMask& b);

double iou(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);
double dsc(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

struct SliceRecord {
  std::string patient_id;
  Plane plane = Plane::kAxial;
  Domain domain = Domain::kWA;
  int slice_index = 0;
  double dsc = 0.0;
  double iou = 0.0;
};

struct PlaneSummary {
  Plane plane = Plane::kAxial;
  std::size_t count = 0;
  MetricPair mean;
};

/// Unweighted per-slice means, one row per plane present, in the fixed
/// order sagittal, axial, coronal.
std::vector<PlaneSummary> aggregate(std::span<const SliceRecord> records);

/// Same, restricted to `planes`; a requested plane with no records is an
/// error.
std::vector<PlaneSummary> aggregate(std::span<const SliceRecord> records,
                                    std::span<const Plane> planes);

/// Rounds half away from zero to 4 decimal places, the table precision.
double round4(double v);
std::string format4(double v);

}  // namespace dopeseg::metrics
