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

#include "dopeseg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

namespace dopeseg::dataset {

namespace {

// Uniform double in [0, 1) with 53 random bits.
double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::string pad3(int v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", v);
  return buf;
}

// Bilinear sample with pixel-centre alignment and zero outside the image.
float sample_bilinear(const Image& img, double r, double c) {
  const int r0 = static_cast<int>(std::floor(r));
  const int c0 = static_cast<int>(std::floor(c));
  const double fr = r - r0;
  const double fc = c - c0;
  auto get = [&](int rr, int cc) -> double {
    if (rr < 0 || rr >= img.rows || cc < 0 || cc >= img.cols) return 0.0;
    return img.at(rr, cc);
  };
  const double top = get(r0, c0) * (1 - fc) + get(r0, c0 + 1) * fc;
  const double bot = get(r0 + 1, c0) * (1 - fc) + get(r0 + 1, c0 + 1) * fc;
  return static_cast<float>(top * (1 - fr) + bot * fr);
}

// Resize with edge clamping (no zero padding at the borders).
Image resize_bilinear(const Image& img, int rows, int cols) {
  if (img.rows == rows && img.cols == cols) return img;
  Image out(rows, cols);
  const double sr = static_cast<double>(img.rows) / rows;
  const double sc = static_cast<double>(img.cols) / cols;
  for (int r = 0; r < rows; ++r) {
    const double fr = std::clamp((r + 0.5) * sr - 0.5, 0.0, img.rows - 1.0);
    const int r0 = static_cast<int>(fr);
    const int r1 = std::min(r0 + 1, img.rows - 1);
    const double wr = fr - r0;
    for (int c = 0; c < cols; ++c) {
      const double fc = std::clamp((c + 0.5) * sc - 0.5, 0.0, img.cols - 1.0);
      const int c0 = static_cast<int>(fc);
      const int c1 = std::min(c0 + 1, img.cols - 1);
      const double wc = fc - c0;
      const double top = img.at(r0, c0) * (1 - wc) + img.at(r0, c1) * wc;
      const double bot = img.at(r1, c0) * (1 - wc) + img.at(r1, c1) * wc;
      out.at(r, c) = static_cast<float>(top * (1 - wr) + bot * wr);
    }
  }
  return out;
}

BinaryMask resize_nearest(const BinaryMask& m, int rows, int cols) {
  if (m.rows == rows && m.cols == cols) return m;
  BinaryMask out(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const int sr = std::min(m.rows - 1, static_cast<int>((r + 0.5) * m.rows / rows));
    for (int c = 0; c < cols; ++c) {
      const int sc = std::min(m.cols - 1, static_cast<int>((c + 0.5) * m.cols / cols));
      out.at(r, c) = m.at(sr, sc) ? 1 : 0;
    }
  }
  return out;
}

// Flip, then rotate about the image centre (backward mapping).
Image geometric(const Image& img, const AugParams& p) {
  Image flipped = img;
  if (p.flip) {
    for (int r = 0; r < img.rows; ++r) {
      for (int c = 0; c < img.cols; ++c) flipped.at(r, c) = img.at(r, img.cols - 1 - c);
    }
  }
  if (p.angle_deg == 0.0) return flipped;
  Image out(img.rows, img.cols);
  const double a = p.angle_deg * std::numbers::pi / 180.0;
  const double ca = std::cos(a);
  const double sa = std::sin(a);
  const double cr = 0.5 * (img.rows - 1);
  const double cc = 0.5 * (img.cols - 1);
  for (int r = 0; r < img.rows; ++r) {
    for (int c = 0; c < img.cols; ++c) {
      const double dr = r - cr;
      const double dc = c - cc;
      out.at(r, c) = sample_bilinear(flipped, cr + ca * dr - sa * dc, cc + sa * dr + ca * dc);
    }
  }
  return out;
}

void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorCode::kValidation, what);
}

}  // namespace

std::uint64_t bounded(Rng& rng, std::uint64_t n) {
  if (n == 0) fail(ErrorCode::kInvalidArgument, "bounded: empty range");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

std::string SliceSample::key() const {
  std::string k = patient_id + "/" + std::string(to_string(plane)) + "/" + pad3(slice_index);
  if (variant > 0) k += "#" + std::to_string(variant);
  return k;
}

std::string SliceSample::image_path() const {
  std::string stem = "slices/" + std::string(to_string(plane)) + "/" + patient_id + "_" +
                     pad3(slice_index);
  if (variant > 0) stem += "_aug" + std::to_string(variant);
  return stem + ".png";
}

std::string SliceSample::mask_path() const {
  std::string p = image_path();
  return p.substr(0, p.size() - 4) + "_mask.png";
}

std::vector<SliceSample> extract_slices(const phantom::Volume& volume, Plane plane,
                                        bool keep_empty) {
  const auto& g = volume.intensities;
  if (!g.same_shape(volume.mask) || g.size() == 0) {
    fail(ErrorCode::kShape, "malformed volume " + volume.patient_id);
  }
  std::vector<SliceSample> out;
  const int count = plane == Plane::kAxial ? g.nz : plane == Plane::kCoronal ? g.ny : g.nx;
  for (int s = 0; s < count; ++s) {
    SliceSample sample;
    sample.plane = plane;
    sample.slice_index = s;
    sample.patient_id = volume.patient_id;
    sample.domain = volume.domain;
    int rows = 0;
    int cols = 0;
    switch (plane) {
      case Plane::kAxial:
        rows = g.ny;
        cols = g.nx;
        break;
      case Plane::kCoronal:
        rows = g.nz;
        cols = g.nx;
        break;
      case Plane::kSagittal:
        rows = g.nz;
        cols = g.ny;
        break;
    }
    sample.image = Image(rows, cols);
    sample.mask = BinaryMask(rows, cols);
    bool any = false;
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        std::size_t idx = 0;
        switch (plane) {
          case Plane::kAxial:
            idx = g.index(c, r, s);
            break;
          case Plane::kCoronal:
            idx = g.index(c, s, g.nz - 1 - r);
            break;
          case Plane::kSagittal:
            idx = g.index(s, c, g.nz - 1 - r);
            break;
        }
        sample.image.at(r, c) = g.data[idx];
        const std::uint8_t m = volume.mask.data[idx] ? 1 : 0;
        sample.mask.at(r, c) = m;
        any = any || m;
      }
    }
    if (any || keep_empty) out.push_back(std::move(sample));
  }
  return out;
}

SliceSample preprocess(const SliceSample& sample, int target_size) {
  if (target_size < 16) {
    fail(ErrorCode::kValidation, "target_size must be >= 16, got " + std::to_string(target_size));
  }
  SliceSample out = sample;
  out.image = resize_bilinear(sample.image, target_size, target_size);
  out.mask = resize_nearest(sample.mask, target_size, target_size);
  const auto [lo, hi] = std::minmax_element(out.image.data.begin(), out.image.data.end());
  const float mn = *lo;
  const float range = *hi - mn;
  for (float& v : out.image.data) {
    v = range > 0.0f ? std::clamp((v - mn) / range, 0.0f, 1.0f) : 0.0f;
  }
  return out;
}

void AugConfig::validate() const {
  require(rotation_deg >= 0 && rotation_deg <= 10,
          "dataset.augmentation.rotation_deg: must lie in [0, 10]");
  require(intensity_jitter >= 0 && intensity_jitter <= 0.05,
          "dataset.augmentation.intensity_jitter: must lie in [0, 0.05]");
  require(copies >= 0, "dataset.augmentation.copies: must be >= 0");
}

AugParams sample_aug_params(const AugConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  AugParams p;
  const double u_flip = uniform01(rng);
  const double u_rot = uniform01(rng);
  const double u_int = uniform01(rng);
  if (config.hflip) p.flip = u_flip < 0.5;
  if (config.rotation_deg > 0) p.angle_deg = config.rotation_deg * (2.0 * u_rot - 1.0);
  if (config.intensity_jitter > 0) p.intensity_offset = config.intensity_jitter * (2.0 * u_int - 1.0);
  return p;
}

BinaryMask transform_mask(const BinaryMask& mask, const AugParams& params) {
  Image as_float(mask.rows, mask.cols);
  for (std::size_t i = 0; i < mask.size(); ++i) as_float.data[i] = mask.data[i] ? 1.0f : 0.0f;
  const Image moved = geometric(as_float, params);
  BinaryMask out(mask.rows, mask.cols);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = moved.data[i] >= 0.5f ? 1 : 0;
  return out;
}

Image transform_image(const Image& image, const AugParams& params) {
  Image out = geometric(image, params);
  if (params.intensity_offset != 0.0) {
    for (float& v : out.data) {
      v = std::clamp(v + static_cast<float>(params.intensity_offset), 0.0f, 1.0f);
    }
  }
  return out;
}

SliceSample augment(const SliceSample& sample, const AugConfig& config, std::uint64_t seed) {
  config.validate();
  if (!config.enabled()) return sample;
  const AugParams p = sample_aug_params(config, seed);
  SliceSample out = sample;
  out.image = transform_image(sample.image, p);
  out.mask = transform_mask(sample.mask, p);
  return out;
}

void AssortmentSpec::validate() const {
  require(na_parts >= 0 && wa_parts >= 0, "assortment: ratio parts must be >= 0");
  require(na_parts + wa_parts >= 1, "assortment: ratio 0:0 is not a valid NA:WA ratio");
  require(total >= 1, "assortment: total must be >= 1");
}

int AssortmentSpec::na_count() const {
  return static_cast<int>(static_cast<long long>(total) * na_parts / (na_parts + wa_parts));
}

std::string AssortmentSpec::label() const {
  if (na_parts == 0) return "Only WA";
  if (wa_parts == 0) return "Only NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02d:%02d", na_parts, wa_parts);
  return buf;
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "?";
}

ManifestEntry entry_for(const SliceSample& s) {
  return {s.key(), s.patient_id, s.domain, s.plane, s.slice_index, s.image_path(),
          s.mask_path()};
}

std::string DatasetManifest::to_csv() const {
  std::ostringstream os;
  os << "path,mask_path,patient_id,domain,plane,split\n";
  for (const auto& e : entries) {
    os << e.image_path << ',' << e.mask_path << ',' << e.patient_id << ','
       << to_string(e.domain) << ',' << to_string(e.plane) << ',' << to_string(split) << '\n';
  }
  return os.str();
}

std::string DatasetManifest::hash() const { return hash_hex(fnv1a64(to_csv())); }

DatasetManifest assort(std::span<const SliceSample> na_pool, std::span<const SliceSample> wa_pool,
                       const AssortmentSpec& spec, Split split) {
  spec.validate();
  const int need_na = spec.na_count();
  const int need_wa = spec.wa_count();
  const char* split_name = to_string(split).data();
  if (need_na > static_cast<int>(na_pool.size())) {
    fail(ErrorCode::kValidation, std::string("NA ") + split_name + " pool has " +
                                     std::to_string(na_pool.size()) + " samples, ratio " +
                                     spec.label() + " needs " + std::to_string(need_na));
  }
  if (need_wa > static_cast<int>(wa_pool.size())) {
    fail(ErrorCode::kValidation, std::string("WA ") + split_name + " pool has " +
                                     std::to_string(wa_pool.size()) + " samples, ratio " +
                                     spec.label() + " needs " + std::to_string(need_wa));
  }
  auto draw = [](std::span<const SliceSample> pool, int k, std::uint64_t seed) {
    std::vector<std::size_t> idx(pool.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(seed);
    // Partial Fisher-Yates: the first k positions are a uniform k-subset.
    for (int i = 0; i < k; ++i) {
      const std::size_t j = i + bounded(rng, idx.size() - i);
      std::swap(idx[i], idx[j]);
    }
    std::vector<ManifestEntry> out;
    for (int i = 0; i < k; ++i) out.push_back(entry_for(pool[idx[i]]));
    return out;
  };
  DatasetManifest m;
  m.spec = spec;
  m.split = split;
  m.na_count = need_na;
  m.wa_count = need_wa;
  m.entries = draw(na_pool, need_na, derive_seed(spec.seed, "assort/na"));
  auto wa = draw(wa_pool, need_wa, derive_seed(spec.seed, "assort/wa"));
  m.entries.insert(m.entries.end(), wa.begin(), wa.end());
  Rng order(derive_seed(spec.seed, "assort/order"));
  shuffle(m.entries, order);
  return m;
}

void SplitFractions::validate() const {
  require(train > 0 && val > 0 && test > 0,
          "dataset.split_fractions: train, val and test fractions must be positive");
  require(std::abs(train + val + test - 1.0) < 1e-9,
          "dataset.split_fractions: fractions must sum to 1");
}

PatientSplit split_patients(const std::vector<std::string>& na_ids,
                            const std::vector<std::string>& wa_ids,
                            const SplitFractions& fractions, std::uint64_t seed) {
  fractions.validate();
  auto count = [](std::size_t n, double f) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * f + 1e-9));
  };
  std::vector<std::string> wa = wa_ids;
  std::vector<std::string> na = na_ids;
  std::sort(wa.begin(), wa.end());
  std::sort(na.begin(), na.end());
  Rng wa_rng(derive_seed(seed, "split/wa"));
  Rng na_rng(derive_seed(seed, "split/na"));
  shuffle(wa, wa_rng);
  shuffle(na, na_rng);

  PatientSplit s;
  const std::size_t wa_test = count(wa.size(), fractions.test);
  const std::size_t wa_val = count(wa.size(), fractions.val);
  const std::size_t na_val = count(na.size(), fractions.val / (fractions.train + fractions.val));
  s.wa_test.assign(wa.begin(), wa.begin() + std::min(wa_test, wa.size()));
  s.wa_val.assign(wa.begin() + s.wa_test.size(),
                  wa.begin() + std::min(wa.size(), s.wa_test.size() + wa_val));
  s.wa_train.assign(wa.begin() + s.wa_test.size() + s.wa_val.size(), wa.end());
  s.na_val.assign(na.begin(), na.begin() + std::min(na_val, na.size()));
  s.na_train.assign(na.begin() + s.na_val.size(), na.end());

  const std::pair<const char*, std::size_t> sizes[] = {
      {"WA train", s.wa_train.size()}, {"WA val", s.wa_val.size()},
      {"WA test", s.wa_test.size()},   {"NA train", s.na_train.size()},
      {"NA val", s.na_val.size()}};
  for (const auto& [name, n] : sizes) {
    if (n == 0) {
      fail(ErrorCode::kValidation, std::string("patient split leaves ") + name + " empty (" +
                                       std::to_string(na.size()) + " NA, " +
                                       std::to_string(wa.size()) + " WA patients)");
    }
  }
  for (auto* v : {&s.wa_train, &s.wa_val, &s.wa_test, &s.na_train, &s.na_val}) {
    std::sort(v->begin(), v->end());
  }
  return s;
}

const SliceSample& Pools::find(const std::string& key) const {
  const auto it = index_.find(key);
  if (it == index_.end()) fail(ErrorCode::kNotFound, "sample " + key + " is not in any pool");
  const auto& [pool, plane, index] = it->second;
  const std::map<Plane, std::vector<SliceSample>>* maps[] = {&na_train, &wa_train, &na_val,
                                                            &wa_val, &test};
  return maps[pool]->at(plane)[index];
}

std::vector<const SliceSample*> Pools::resolve(const DatasetManifest& manifest) const {
  std::vector<const SliceSample*> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) out.push_back(&find(e.key));
  return out;
}

void Pools::reindex() {
  index_.clear();
  const std::map<Plane, std::vector<SliceSample>>* maps[] = {&na_train, &wa_train, &na_val,
                                                            &wa_val, &test};
  for (int p = 0; p < 5; ++p) {
    for (const auto& [plane, samples] : *maps[p]) {
      for (std::size_t i = 0; i < samples.size(); ++i) {
        index_[samples[i].key()] = {p, plane, i};
      }
    }
  }
}

Pools build_pools(const std::vector<phantom::Volume>& na_cohort,
                  const std::vector<phantom::Volume>& wa_cohort, const PatientSplit& split,
                  const std::vector<Plane>& planes, int target_size, const AugConfig& aug,
                  std::uint64_t seed) {
  aug.validate();
  Pools pools;
  pools.planes = planes;
  auto in = [](const std::vector<std::string>& ids, const std::string& id) {
    return std::binary_search(ids.begin(), ids.end(), id);
  };
  auto add = [&](const phantom::Volume& v, Plane plane,
                 std::map<Plane, std::vector<SliceSample>>& dst, bool training) {
    for (const auto& raw : extract_slices(v, plane, false)) {
      SliceSample s = preprocess(raw, target_size);
      if (training && aug.enabled()) {
        for (int k = 1; k <= aug.copies; ++k) {
          SliceSample a = augment(s, aug, derive_seed(seed, s.key() + "#" + std::to_string(k)));
          a.variant = k;
          dst[plane].push_back(std::move(a));
        }
      }
      dst[plane].push_back(std::move(s));
    }
  };
  for (Plane plane : planes) {
    pools.na_train[plane];
    pools.wa_train[plane];
    pools.na_val[plane];
    pools.wa_val[plane];
    pools.test[plane];
    for (const auto& v : na_cohort) {
      if (in(split.na_train, v.patient_id)) add(v, plane, pools.na_train, true);
      else if (in(split.na_val, v.patient_id)) add(v, plane, pools.na_val, false);
    }
    for (const auto& v : wa_cohort) {
      if (in(split.wa_train, v.patient_id)) add(v, plane, pools.wa_train, true);
      else if (in(split.wa_val, v.patient_id)) add(v, plane, pools.wa_val, false);
      else if (in(split.wa_test, v.patient_id)) add(v, plane, pools.test, false);
    }
  }
  pools.test_manifest.split = Split::kTest;
  pools.test_manifest.spec = AssortmentSpec{0, 1, 1, seed};
  for (Plane plane : planes) {
    for (const auto& s : pools.test[plane]) {
      pools.test_manifest.entries.push_back(entry_for(s));
      ++pools.test_manifest.wa_count;
    }
  }
  pools.test_manifest.spec.total = std::max(1, pools.test_manifest.wa_count);
  pools.reindex();
  return pools;
}

nlohmann::json to_json(const AssortmentSpec& s) {
  return {{"na_parts", s.na_parts}, {"wa_parts", s.wa_parts}, {"total", s.total}, {"seed", s.seed}};
}

nlohmann::json to_json(const AugConfig& a) {
  return {{"hflip", a.hflip},
          {"rotation_deg", a.rotation_deg},
          {"intensity_jitter", a.intensity_jitter},
          {"copies", a.copies}};
}

AugConfig aug_config_from_json(const nlohmann::json& j) {
  AugConfig a;
  a.hflip = j.value("hflip", a.hflip);
  a.rotation_deg = j.value("rotation_deg", a.rotation_deg);
  a.intensity_jitter = j.value("intensity_jitter", a.intensity_jitter);
  a.copies = j.value("copies", a.copies);
  return a;
}

}  // namespace dopeseg::dataset
