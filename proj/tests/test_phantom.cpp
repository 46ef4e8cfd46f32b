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


#include <filesystem>

#include "doctest.h"
#include "dopeseg/phantom.hpp"
#include "oracles.hpp"

using namespace dopeseg;

namespace {

phantom::PhantomConfig quiet() {
  phantom::PhantomConfig c;
  c.noise_sigma = 0.0;
  return c;
}

}  // namespace

TEST_CASE("NA mask equals a brute-force ellipsoid rasterization") {
  const auto cfg = quiet();
  for (const char* id : {"NA_000", "NA_001", "NA_002", "NA_017"}) {
    const auto v = phantom::generate_patient(cfg, id);
    const auto& b = v.bladder;
    std::size_t mismatches = 0;
    std::size_t inside = 0;
    for (int z = 0; z < v.mask.nz; ++z) {
      for (int y = 0; y < v.mask.ny; ++y) {
        for (int x = 0; x < v.mask.nx; ++x) {
          const std::array<double, 3> p{x * v.spacing[0], y * v.spacing[1], z * v.spacing[2]};
          const bool want = oracle::in_ellipsoid(p, b.center, b.semi_axes, b.yaw);
          inside += want;
          mismatches += want != (v.mask.at(x, y, z) != 0);
        }
      }
    }
    CHECK(mismatches == 0);
    CHECK(inside > 1000);
  }
}

TEST_CASE("bladder intensity is flat without noise") {
  const auto cfg = quiet();
  const auto v = phantom::generate_patient(cfg, "NA_003");
  for (std::size_t i = 0; i < v.mask.size(); ++i) {
    if (v.mask.data[i]) REQUIRE(v.intensities.data[i] == doctest::Approx(cfg.bladder_intensity));
  }
}

TEST_CASE("generation is deterministic per patient id") {
  phantom::PhantomConfig cfg;
  const auto a = phantom::generate_patient(cfg, "NA_005");
  const auto b = phantom::generate_patient(cfg, "NA_005");
  const auto c = phantom::generate_patient(cfg, "NA_006");
  CHECK(a.intensities == b.intensities);
  CHECK(a.mask == b.mask);
  CHECK(!(a.mask == c.mask));
  cfg.seed += 1;
  const auto d = phantom::generate_patient(cfg, "NA_005");
  CHECK(!(a.intensities == d.intensities));
}

TEST_CASE("WA masks are one component and avoid the applicator") {
  phantom::PhantomConfig cfg;
  phantom::ApplicatorSpec spec;
  const auto cohort = phantom::generate_cohort(12, Domain::kWA, cfg, spec);
  REQUIRE(cohort.size() == 12);
  const std::array<double, 3> origin{spec.axis_entry_point[0] * cfg.voxel_spacing[0],
                                     spec.axis_entry_point[1] * cfg.voxel_spacing[1],
                                     spec.axis_entry_point[2] * cfg.voxel_spacing[2]};
  // The entry point is in voxels, the direction already in millimetres.
  const std::array<double, 3> dir = spec.axis_direction;
  for (const auto& v : cohort) {
    CHECK(v.domain == Domain::kWA);
    CHECK(v.patient_id.rfind("WA_", 0) == 0);
    CHECK(phantom::count_components(v.mask) == 1);
    std::size_t inside_cylinder = 0;
    for (int z = 0; z < v.mask.nz; ++z) {
      for (int y = 0; y < v.mask.ny; ++y) {
        for (int x = 0; x < v.mask.nx; ++x) {
          if (!v.mask.at(x, y, z)) continue;
          const std::array<double, 3> p{x * cfg.voxel_spacing[0], y * cfg.voxel_spacing[1],
                                        z * cfg.voxel_spacing[2]};
          inside_cylinder += oracle::line_distance(p, origin, dir) <= spec.radius;
        }
      }
    }
    CHECK(inside_cylinder == 0);
  }
}

TEST_CASE("applicator leaves voxels far from the axis untouched in the mask") {
  phantom::PhantomConfig cfg = quiet();
  const auto na = phantom::generate_patient(cfg, "NA_004");
  phantom::ApplicatorSpec spec;
  const auto wa = phantom::apply_applicator(na, spec);
  CHECK(wa.patient_id == na.patient_id);
  CHECK(wa.applicator.has_value());
  // The push decays as exp(-d / falloff); far beyond it the mask is unchanged.
  std::size_t far = 0;
  std::size_t changed = 0;
  for (int z = 0; z < na.mask.nz; ++z) {
    for (int y = 0; y < na.mask.ny; ++y) {
      for (int x = 0; x < na.mask.nx; ++x) {
        if (phantom::axis_distance(spec, cfg.voxel_spacing, x, y, z) < 10 * spec.displacement_falloff) {
          continue;
        }
        ++far;
        changed += na.mask.at(x, y, z) != wa.mask.at(x, y, z);
      }
    }
  }
  CHECK(far > 0);
  CHECK(changed == 0);
  CHECK_THROWS_AS(phantom::apply_applicator(wa, spec), Error);
}

TEST_CASE("config validation names the field") {
  phantom::PhantomConfig c;
  c.noise_sigma = -1;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("noise_sigma"), Error);
  phantom::ApplicatorSpec a;
  a.radius = 0;
  CHECK_THROWS_WITH_AS(a.validate(), doctest::Contains("radius"), Error);
  a = {};
  a.displacement_magnitude = a.displacement_falloff;
  CHECK_THROWS_WITH_AS(a.validate(), doctest::Contains("displacement_magnitude"), Error);
  a = {};
  a.axis_direction = {0, 0, 0};
  CHECK_THROWS_AS(a.validate(), Error);
}

TEST_CASE("volumes round-trip through disk") {
  const auto dir = std::filesystem::temp_directory_path() / "dopeseg_test_phantom_io";
  std::filesystem::remove_all(dir);
  phantom::PhantomConfig cfg;
  const auto na = phantom::generate_patient(cfg, "NA_009");
  const auto wa = phantom::apply_applicator(na, {});
  phantom::write_volume(na, dir);
  phantom::write_volume(wa, dir / "wa");
  const auto na2 = phantom::read_volume(dir, "NA_009");
  const auto wa2 = phantom::read_volume(dir / "wa", "NA_009");
  CHECK(na2.intensities == na.intensities);
  CHECK(na2.mask == na.mask);
  CHECK(na2.config_hash == na.config_hash);
  CHECK(na2.bladder.yaw == doctest::Approx(na.bladder.yaw));
  CHECK(wa2.domain == Domain::kWA);
  CHECK(wa2.applicator.has_value());
  CHECK(wa2.mask == wa.mask);
  CHECK_THROWS_AS(phantom::read_volume(dir, "NA_404"), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("config hash depends on the applicator") {
  phantom::PhantomConfig cfg;
  phantom::ApplicatorSpec a;
  const auto h0 = phantom::config_hash(cfg, std::nullopt);
  const auto h1 = phantom::config_hash(cfg, a);
  a.radius += 0.5;
  CHECK(h0 != h1);
  CHECK(h1 != phantom::config_hash(cfg, a));
  CHECK(h0 == phantom::config_hash(cfg, std::nullopt));
}
