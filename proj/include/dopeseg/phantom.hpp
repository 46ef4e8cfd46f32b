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

// Synthetic pelvic CT phantoms with an exact bladder ground truth.
//
// Intensities are in normalised units: 0 is air, 1 is the brightest value
// the generator emits (metal). Real CT in Hounsfield units maps onto this
// scale as (HU + 1000) / 3000, clipped to [0, 1].
//
// Coordinates: voxel (x, y, z) has its centre at (x * sx, y * sy, z * sz) mm.
// Axial slices are normal to z, coronal to y, sagittal to x.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dopeseg/common.hpp"
#include "dopeseg/grid.hpp"

namespace dopeseg::phantom {

using Vec3 = std::array<double, 3>;

struct PhantomConfig {
  std::array<int, 3> grid_shape{96, 96, 64};
  Vec3 voxel_spacing{1.5, 1.5, 2.5};
  std::array<double, 2> bladder_radius_range{16.0, 26.0};  // mm, semi-axes
  double bladder_center_jitter = 5.0;                      // mm, per axis
  double background_intensity = 0.3;
  double bladder_intensity = 0.6;
  double noise_sigma = 0.03;
  std::uint64_t seed = 2025;

  void validate() const;
};

struct ApplicatorSpec {
  Vec3 axis_entry_point{47.5, 74.0, 0.0};  // voxel coordinates
  Vec3 axis_direction{0.0, -0.1, 1.0};     // normalised on use
  double radius = 3.5;                     // mm
  double intensity = 1.0;
  int streak_count = 6;
  double streak_amplitude = 0.15;
  double shadow_band_width = 4.0;     // mm
  double shadow_attenuation = 0.5;    // fraction removed inside the band
  double displacement_magnitude = 8.0;  // mm at the axis
  double displacement_falloff = 12.0;   // mm e-folding length

  void validate() const;
};

/// Sampled bladder ellipsoid: centre (mm), semi-axes (mm), rotation about z.
struct BladderGeometry {
  Vec3 center{};
  Vec3 semi_axes{};
  double yaw = 0.0;

  /// True when the point (mm) lies inside the ellipsoid surface.
  bool contains(const Vec3& p) const;
};

struct Volume {
  Grid3<float> intensities;
  Grid3<std::uint8_t> mask;
  Vec3 spacing{1.0, 1.0, 1.0};
  Domain domain = Domain::kNA;
  std::string patient_id;
  std::uint64_t seed = 0;
  std::string config_hash;
  BladderGeometry bladder;
  std::optional<ApplicatorSpec> applicator;
};

nlohmann::json to_json(const PhantomConfig& c);
PhantomConfig phantom_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ApplicatorSpec& a);
ApplicatorSpec applicator_from_json(const nlohmann::json& j);

/// Hash of the generator configuration recorded in every sidecar.
std::string config_hash(const PhantomConfig& config,
                        const std::optional<ApplicatorSpec>& applicator);

/// Per-patient seed: derive_seed(config seed, patient id).
std::uint64_t patient_seed(std::uint64_t seed, const std::string& patient_id);

/// NA volume with one ellipsoidal bladder. The bladder pose is resampled up
/// to 10 times if it does not fit inside the grid; then kValidation.
Volume generate_patient(const PhantomConfig& config, const std::string& patient_id);

/// Turns an NA volume into its WA counterpart: radial push away from the
/// applicator axis (backward warp, trilinear, mask re-thresholded at 0.5),
/// metal cylinder, streak rays, shadow band, and mask cleared inside the
/// cylinder. Fails with kValidation if the mask no longer forms a single
/// 6-connected component.
Volume apply_applicator(const Volume& volume, const ApplicatorSpec& spec);

/// Patients are named "<domain>_<index:03>".
std::vector<Volume> generate_cohort(int n_patients, Domain domain, const PhantomConfig& config,
                                    const std::optional<ApplicatorSpec>& applicator);

/// Distance (mm) from a voxel centre to the applicator axis line.
double axis_distance(const ApplicatorSpec& spec, const Vec3& spacing, int x, int y, int z);

/// Number of 6-connected foreground components.
int count_components(const Grid3<std::uint8_t>& mask);

/// Writes <id>.f32 (float32 LE, C-order [z][y][x]), <id>.mask.u8 and
/// <id>.json into `dir`.
void write_volume(const Volume& volume, const std::filesystem::path& dir);
Volume read_volume(const std::filesystem::path& dir, const std::string& patient_id);

}  // namespace dopeseg::phantom
