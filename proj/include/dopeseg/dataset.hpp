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

// 2D slice datasets: extraction from volumes, resizing and normalisation,
// augmentation, patient-wise splitting and ratio-controlled assortment of
// NA and WA samples.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dopeseg/common.hpp"
#include "dopeseg/grid.hpp"
#include "dopeseg/phantom.hpp"

namespace dopeseg::dataset {

struct SliceSample {
  Image image;       // [0,1]
  BinaryMask mask;   // same shape, {0,1}
  Plane plane = Plane::kAxial;
  int slice_index = 0;
  std::string patient_id;
  Domain domain = Domain::kNA;
  int variant = 0;  // 0 = original, k > 0 = k-th augmented copy

  /// Stable identifier "<patient>/<plane>/<index:03>[#k]".
  std::string key() const;
  /// Slice PNG path relative to a dataset root.
  std::string image_path() const;
  std::string mask_path() const;
};

/// Slices along the plane normal in ascending index order. Coronal and
/// sagittal slices put the superior end (largest z) on the first row.
std::vector<SliceSample> extract_slices(const phantom::Volume& volume, Plane plane,
                                        bool keep_empty);

/// Bilinear resize of the image, nearest-neighbour resize of the mask, then
/// per-slice min-max normalisation (constant slices become all zero).
SliceSample preprocess(const SliceSample& sample, int target_size);

struct AugConfig {
  bool hflip = false;
  double rotation_deg = 0.0;      // max |angle|, <= 10
  double intensity_jitter = 0.0;  // max |offset|, <= 0.05
  int copies = 0;                 // augmented copies added per training sample

  bool enabled() const { return hflip || rotation_deg > 0 || intensity_jitter > 0; }
  void validate() const;
};

/// One concrete draw of the augmentation menu.
struct AugParams {
  bool flip = false;
  double angle_deg = 0.0;
  double intensity_offset = 0.0;
};

AugParams sample_aug_params(const AugConfig& config, std::uint64_t seed);
/// Geometric part only, applied to a mask and re-binarised at 0.5.
BinaryMask transform_mask(const BinaryMask& mask, const AugParams& params);
Image transform_image(const Image& image, const AugParams& params);
SliceSample augment(const SliceSample& sample, const AugConfig& config, std::uint64_t seed);

struct AssortmentSpec {
  int na_parts = 7;
  int wa_parts = 3;
  int total = 1000;
  std::uint64_t seed = 0;

  void validate() const;
  /// floor(total * n / (n + m)); the WA count takes the remainder.
  int na_count() const;
  int wa_count() const { return total - na_count(); }
  /// "07:03"; "Only WA" for 0:m and "Only NA" for n:0.
  std::string label() const;
};

enum class Split { kTrain, kVal, kTest };
std::string_view to_string(Split s);

struct ManifestEntry {
  std::string key;
  std::string patient_id;
  Domain domain = Domain::kNA;
  Plane plane = Plane::kAxial;
  int slice_index = 0;
  std::string image_path;
  std::string mask_path;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  int na_count = 0;
  int wa_count = 0;
  AssortmentSpec spec;
  Split split = Split::kTrain;

  /// CSV with header path,mask_path,patient_id,domain,plane,split.
  std::string to_csv() const;
  std::string hash() const;
};

ManifestEntry entry_for(const SliceSample& s);

/// Draws na_count / wa_count samples uniformly without replacement from each
/// pool and interleaves them with a seeded shuffle.
DatasetManifest assort(std::span<const SliceSample> na_pool, std::span<const SliceSample> wa_pool,
                       const AssortmentSpec& spec, Split split = Split::kTrain);

struct SplitFractions {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;

  void validate() const;
};

/// Patient ids per split. NA patients are never placed in test.
struct PatientSplit {
  std::vector<std::string> na_train;
  std::vector<std::string> na_val;
  std::vector<std::string> wa_train;
  std::vector<std::string> wa_val;
  std::vector<std::string> wa_test;
};

/// WA: test = floor(N * test), val = floor(N * val), train = remainder.
/// NA: val = floor(N * val / (train + val)), train = remainder. Any empty
/// split is an error.
PatientSplit split_patients(const std::vector<std::string>& na_ids,
                            const std::vector<std::string>& wa_ids,
                            const SplitFractions& fractions, std::uint64_t seed);

/// Preprocessed slices of every patient for a set of planes, grouped by
/// split and domain, plus the fixed WA-only test manifest.
struct Pools {
  std::vector<Plane> planes;
  std::map<Plane, std::vector<SliceSample>> na_train;
  std::map<Plane, std::vector<SliceSample>> wa_train;
  std::map<Plane, std::vector<SliceSample>> na_val;
  std::map<Plane, std::vector<SliceSample>> wa_val;
  std::map<Plane, std::vector<SliceSample>> test;
  DatasetManifest test_manifest;  // all planes, WA only

  /// Looks a sample up by key in any pool.
  const SliceSample& find(const std::string& key) const;
  std::vector<const SliceSample*> resolve(const DatasetManifest& manifest) const;
  void reindex();

 private:
  struct Location {
    int pool;
    Plane plane;
    std::size_t index;
  };
  std::map<std::string, Location> index_;
};

/// Empty slices are dropped everywhere. Augmented copies, when enabled, are
/// appended to the training pools only.
Pools build_pools(const std::vector<phantom::Volume>& na_cohort,
                  const std::vector<phantom::Volume>& wa_cohort, const PatientSplit& split,
                  const std::vector<Plane>& planes, int target_size, const AugConfig& aug,
                  std::uint64_t seed);

/// Uniform integer in [0, n) from a 64-bit generator, rejection sampled so
/// draws are identical on every standard library.
std::uint64_t bounded(Rng& rng, std::uint64_t n);
template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[bounded(rng, i)]);
  }
}

nlohmann::json to_json(const AssortmentSpec& s);
nlohmann::json to_json(const AugConfig& a);
AugConfig aug_config_from_json(const nlohmann::json& j);

}  // namespace dopeseg::dataset
