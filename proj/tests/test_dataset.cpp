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


#include <cmath>
#include <set>

#include "doctest.h"
#include "dopeseg/dataset.hpp"
#include "dopeseg/phantom.hpp"

using namespace dopeseg;

namespace {

std::vector<dataset::SliceSample> pool(Domain d, int patients, int per_patient) {
  std::vector<dataset::SliceSample> out;
  for (int p = 0; p < patients; ++p) {
    for (int k = 0; k < per_patient; ++k) {
      dataset::SliceSample s;
      s.domain = d;
      s.patient_id = std::string(d == Domain::kNA ? "NA_" : "WA_") + std::to_string(p);
      s.slice_index = k;
      s.image = Image(4, 4);
      s.mask = BinaryMask(4, 4);
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<std::string> ids(const char* prefix, int n) {
  std::vector<std::string> v;
  for (int i = 0; i < n; ++i) v.push_back(prefix + std::to_string(100 + i));
  return v;
}

}  // namespace

TEST_CASE("7:3 of 1000 is exactly 700 NA and 300 WA") {
  const auto na = pool(Domain::kNA, 20, 60);
  const auto wa = pool(Domain::kWA, 20, 60);
  const auto m = dataset::assort(na, wa, {7, 3, 1000, 5});
  CHECK(m.na_count == 700);
  CHECK(m.wa_count == 300);
  CHECK(m.entries.size() == 1000);
  int na_seen = 0;
  std::set<std::string> keys;
  for (const auto& e : m.entries) {
    na_seen += e.domain == Domain::kNA;
    keys.insert(e.key);
  }
  CHECK(na_seen == 700);
  CHECK(keys.size() == 1000);  // drawn without replacement
}

TEST_CASE("odd totals floor the NA count") {
  const auto na = pool(Domain::kNA, 4, 40);
  const auto wa = pool(Domain::kWA, 4, 40);
  const auto m = dataset::assort(na, wa, {1, 1, 101, 0});
  CHECK(m.na_count == 50);
  CHECK(m.wa_count == 51);
}

TEST_CASE("0:1 and 1:0 draw from one domain only") {
  const auto na = pool(Domain::kNA, 4, 40);
  const auto wa = pool(Domain::kWA, 4, 40);
  const auto only_wa = dataset::assort(na, wa, {0, 1, 100, 0});
  CHECK(only_wa.na_count == 0);
  CHECK(only_wa.wa_count == 100);
  CHECK(dataset::AssortmentSpec{0, 1, 100, 0}.label() == "Only WA");
  const auto only_na = dataset::assort(na, {}, {1, 0, 100, 0});
  CHECK(only_na.na_count == 100);
  CHECK(dataset::AssortmentSpec{1, 0, 100, 0}.label() == "Only NA");
  CHECK(dataset::AssortmentSpec{7, 3, 100, 0}.label() == "07:03");
}

TEST_CASE("realized NA fraction is within 1/total across the grid") {
  const auto na = pool(Domain::kNA, 20, 60);
  const auto wa = pool(Domain::kWA, 20, 60);
  const std::pair<int, int> grid[] = {{1, 9}, {2, 8}, {3, 7}, {4, 6}, {5, 5}, {6, 4},
                                      {7, 3}, {8, 2}, {9, 1}, {0, 1}, {1, 0}};
  for (int total : {1, 7, 99, 200, 1000}) {
    for (const auto& [n, m] : grid) {
      const auto man = dataset::assort(na, wa, {n, m, total, 1});
      const double want = static_cast<double>(n) / (n + m);
      const double got = static_cast<double>(man.na_count) / total;
      CHECK(man.na_count + man.wa_count == total);
      CHECK(std::abs(got - want) < 1.0 / total);
    }
  }
}

TEST_CASE("assortment is deterministic per seed") {
  const auto na = pool(Domain::kNA, 10, 30);
  const auto wa = pool(Domain::kWA, 10, 30);
  const auto a = dataset::assort(na, wa, {7, 3, 200, 9});
  const auto b = dataset::assort(na, wa, {7, 3, 200, 9});
  const auto c = dataset::assort(na, wa, {7, 3, 200, 10});
  CHECK(a.to_csv() == b.to_csv());
  CHECK(a.hash() == b.hash());
  CHECK(a.to_csv() != c.to_csv());
  // Pool order does not matter beyond what the caller controls: same input,
  // same output, including across splits.
  CHECK(dataset::assort(na, wa, {7, 3, 200, 9}, dataset::Split::kVal).to_csv() != a.to_csv());
}

TEST_CASE("assortment rejects impossible requests") {
  const auto na = pool(Domain::kNA, 2, 10);
  const auto wa = pool(Domain::kWA, 2, 10);
  CHECK_THROWS_WITH_AS(dataset::assort(na, wa, {7, 3, 100, 0}), doctest::Contains("NA train pool"),
                       Error);
  CHECK_THROWS_AS(dataset::assort(na, wa, {0, 0, 10, 0}), Error);
  CHECK_THROWS_AS(dataset::assort(na, wa, {1, 1, 0, 0}), Error);
}

TEST_CASE("manifest CSV has the documented header") {
  const auto na = pool(Domain::kNA, 2, 3);
  const auto wa = pool(Domain::kWA, 2, 3);
  const auto csv = dataset::assort(na, wa, {1, 1, 4, 0}).to_csv();
  CHECK(csv.rfind("path,mask_path,patient_id,domain,plane,split\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}

TEST_CASE("20 WA patients split 12/4/4, 20 NA split 15/5") {
  const auto s = dataset::split_patients(ids("NA_", 20), ids("WA_", 20), {}, 42);
  CHECK(s.wa_train.size() == 12);
  CHECK(s.wa_val.size() == 4);
  CHECK(s.wa_test.size() == 4);
  CHECK(s.na_train.size() == 15);
  CHECK(s.na_val.size() == 5);
  std::set<std::string> all;
  for (const auto* v : {&s.wa_train, &s.wa_val, &s.wa_test, &s.na_train, &s.na_val}) {
    all.insert(v->begin(), v->end());
  }
  CHECK(all.size() == 40);  // disjoint and complete
}

TEST_CASE("split is seed-deterministic and input-order independent") {
  auto na = ids("NA_", 20);
  auto wa = ids("WA_", 20);
  const auto a = dataset::split_patients(na, wa, {}, 1);
  std::reverse(na.begin(), na.end());
  std::reverse(wa.begin(), wa.end());
  const auto b = dataset::split_patients(na, wa, {}, 1);
  CHECK(a.wa_test == b.wa_test);
  CHECK(a.na_val == b.na_val);
  const auto c = dataset::split_patients(na, wa, {}, 2);
  CHECK((a.wa_test != c.wa_test || a.wa_val != c.wa_val));
}

TEST_CASE("split validation") {
  CHECK_THROWS_AS(dataset::split_patients(ids("NA_", 20), ids("WA_", 20), {0.5, 0.2, 0.2}, 0),
                  Error);
  CHECK_THROWS_WITH_AS(dataset::split_patients(ids("NA_", 1), ids("WA_", 20), {}, 0),
                       doctest::Contains("empty"), Error);
}

TEST_CASE("slices follow the documented orientation") {
  phantom::PhantomConfig cfg;
  cfg.noise_sigma = 0;
  const auto v = phantom::generate_patient(cfg, "NA_001");
  const auto& g = v.mask;
  const auto axial = dataset::extract_slices(v, Plane::kAxial, true);
  const auto coronal = dataset::extract_slices(v, Plane::kCoronal, true);
  const auto sagittal = dataset::extract_slices(v, Plane::kSagittal, true);
  REQUIRE(axial.size() == static_cast<std::size_t>(g.nz));
  REQUIRE(coronal.size() == static_cast<std::size_t>(g.ny));
  REQUIRE(sagittal.size() == static_cast<std::size_t>(g.nx));
  CHECK(axial[0].image.rows == g.ny);
  CHECK(axial[0].image.cols == g.nx);
  CHECK(coronal[0].image.rows == g.nz);
  CHECK(sagittal[0].image.cols == g.ny);
  // Spot checks: axial (r, c) = (y, x); coronal and sagittal put superior
  // (high z) at the top row.
  for (int probe = 0; probe < 200; ++probe) {
    const int x = (probe * 37) % g.nx;
    const int y = (probe * 53) % g.ny;
    const int z = (probe * 29) % g.nz;
    REQUIRE(axial[z].mask.at(y, x) == g.at(x, y, z));
    REQUIRE(coronal[y].mask.at(g.nz - 1 - z, x) == g.at(x, y, z));
    REQUIRE(sagittal[x].mask.at(g.nz - 1 - z, y) == g.at(x, y, z));
    REQUIRE(axial[z].image.at(y, x) == v.intensities.at(x, y, z));
  }
  // Empty slices are dropped by default.
  std::size_t nonempty = 0;
  for (const auto& s : axial) {
    nonempty += std::any_of(s.mask.data.begin(), s.mask.data.end(), [](auto b) { return b != 0; });
  }
  CHECK(dataset::extract_slices(v, Plane::kAxial, false).size() == nonempty);
  CHECK(nonempty < axial.size());
}

TEST_CASE("preprocess resizes and min-max normalizes") {
  phantom::PhantomConfig cfg;
  const auto v = phantom::generate_patient(cfg, "NA_002");
  const auto s = dataset::extract_slices(v, Plane::kCoronal, false).front();
  const auto p = dataset::preprocess(s, 32);
  CHECK(p.image.rows == 32);
  CHECK(p.mask.cols == 32);
  CHECK(*std::min_element(p.image.data.begin(), p.image.data.end()) == 0.0f);
  CHECK(*std::max_element(p.image.data.begin(), p.image.data.end()) == 1.0f);
  for (auto b : p.mask.data) REQUIRE((b == 0 || b == 1));
  CHECK(p.key() == s.key());
  CHECK_THROWS_AS(dataset::preprocess(s, 8), Error);
}

TEST_CASE("sample keys and paths") {
  dataset::SliceSample s;
  s.patient_id = "WA_003";
  s.plane = Plane::kSagittal;
  s.slice_index = 7;
  CHECK(s.key() == "WA_003/sagittal/007");
  CHECK(s.image_path() == "slices/sagittal/WA_003_007.png");
  CHECK(s.mask_path() == "slices/sagittal/WA_003_007_mask.png");
  s.variant = 2;
  CHECK(s.key() == "WA_003/sagittal/007#2");
}

TEST_CASE("identity augmentation changes nothing") {
  dataset::SliceSample s;
  s.image = Image(16, 16);
  s.mask = BinaryMask(16, 16);
  for (int i = 0; i < 256; ++i) {
    s.image.data[i] = static_cast<float>(i) / 255.0f;
    s.mask.data[i] = (i % 16) < 5;
  }
  const dataset::AugParams none;
  CHECK(dataset::transform_image(s.image, none) == s.image);
  CHECK(dataset::transform_mask(s.mask, none) == s.mask);
}

TEST_CASE("flip is an involution and mirrors columns") {
  BinaryMask m(8, 8);
  m.at(2, 1) = 1;
  dataset::AugParams flip;
  flip.flip = true;
  const auto f = dataset::transform_mask(m, flip);
  CHECK(f.at(2, 6) == 1);
  CHECK(std::count(f.data.begin(), f.data.end(), 1) == 1);
  CHECK(dataset::transform_mask(f, flip) == m);
}

TEST_CASE("augmented draws respect their bounds") {
  dataset::AugConfig cfg{true, 10.0, 0.05, 1};
  int flips = 0;
  for (std::uint64_t seed = 0; seed < 400; ++seed) {
    const auto p = dataset::sample_aug_params(cfg, seed);
    REQUIRE(std::abs(p.angle_deg) <= 10.0);
    REQUIRE(std::abs(p.intensity_offset) <= 0.05);
    flips += p.flip;
  }
  CHECK(flips > 150);
  CHECK(flips < 250);
  const auto p = dataset::sample_aug_params({}, 3);
  CHECK_FALSE(p.flip);
  CHECK(p.angle_deg == 0.0);
  CHECK(p.intensity_offset == 0.0);
  CHECK_THROWS_AS((dataset::AugConfig{false, 11.0, 0.0, 0}.validate()), Error);
  CHECK_THROWS_AS((dataset::AugConfig{false, 0.0, 0.1, 0}.validate()), Error);
}

TEST_CASE("augmented masks stay binary and images stay in [0, 1]") {
  dataset::SliceSample s;
  s.image = Image(32, 32);
  s.mask = BinaryMask(32, 32);
  for (int r = 0; r < 32; ++r) {
    for (int c = 0; c < 32; ++c) {
      const bool in = (r - 16) * (r - 16) + (c - 14) * (c - 14) < 64;
      s.mask.at(r, c) = in;
      s.image.at(r, c) = in ? 0.98f : 0.02f;
    }
  }
  const dataset::AugConfig cfg{true, 10.0, 0.05, 1};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto a = dataset::augment(s, cfg, seed);
    for (auto b : a.mask.data) REQUIRE((b == 0 || b == 1));
    for (float v : a.image.data) REQUIRE((v >= 0.0f && v <= 1.0f));
    const auto area = std::count(a.mask.data.begin(), a.mask.data.end(), 1);
    const auto area0 = std::count(s.mask.data.begin(), s.mask.data.end(), 1);
    // A small rotation keeps the disk area within a few pixels.
    REQUIRE(std::abs(area - area0) <= 12);
    const auto again = dataset::augment(s, cfg, seed);
    REQUIRE(again.image == a.image);
  }
}

TEST_CASE("pools keep test WA-only and augmentation out of test") {
  phantom::PhantomConfig cfg;
  cfg.grid_shape = {48, 48, 32};
  cfg.bladder_radius_range = {8.0, 12.0};
  cfg.bladder_center_jitter = 2.0;
  phantom::ApplicatorSpec app;
  app.axis_entry_point = {23.5, 37.0, 0.0};
  const auto na = phantom::generate_cohort(5, Domain::kNA, cfg, std::nullopt);
  const auto wa = phantom::generate_cohort(5, Domain::kWA, cfg, app);
  std::vector<std::string> na_ids;
  std::vector<std::string> wa_ids;
  for (const auto& v : na) na_ids.push_back(v.patient_id);
  for (const auto& v : wa) wa_ids.push_back(v.patient_id);
  const auto split = dataset::split_patients(na_ids, wa_ids, {}, 3);
  const std::vector<Plane> planes{Plane::kAxial, Plane::kCoronal};
  const dataset::AugConfig aug{true, 5.0, 0.0, 1};
  const auto pools = dataset::build_pools(na, wa, split, planes, 16, aug, 9);

  const std::set<std::string> test_ids(split.wa_test.begin(), split.wa_test.end());
  for (Plane p : planes) {
    for (const auto& s : pools.test.at(p)) {
      REQUIRE(s.domain == Domain::kWA);
      REQUIRE(s.variant == 0);
      REQUIRE(test_ids.count(s.patient_id) == 1);
    }
    for (const auto& s : pools.na_train.at(p)) REQUIRE(test_ids.count(s.patient_id) == 0);
    // One augmented copy per original training slice.
    const auto& wt = pools.wa_train.at(p);
    const auto copies = std::count_if(wt.begin(), wt.end(), [](auto& s) { return s.variant > 0; });
    CHECK(copies * 2 == static_cast<long>(wt.size()));
    for (const auto& s : pools.na_val.at(p)) REQUIRE(s.variant == 0);
  }
  CHECK(pools.test_manifest.wa_count == static_cast<int>(pools.test_manifest.entries.size()));
  CHECK(pools.test_manifest.na_count == 0);
  const auto& first = pools.test.at(Plane::kAxial).front();
  CHECK(&pools.find(first.key()) == &first);
  CHECK_THROWS_AS(pools.find("nobody/axial/000"), Error);

  const auto again = dataset::build_pools(na, wa, split, planes, 16, aug, 9);
  CHECK(again.test_manifest.hash() == pools.test_manifest.hash());
  CHECK(again.wa_train.at(Plane::kAxial).back().image == pools.wa_train.at(Plane::kAxial).back().image);
}
