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

#include "dopeseg/phantom.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

namespace dopeseg::phantom {

namespace {

constexpr int kMaxPlacementAttempts = 10;

double norm(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

Vec3 unit(const Vec3& v) {
  const double n = norm(v);
  return {v[0] / n, v[1] / n, v[2] / n};
}

void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorCode::kValidation, what);
}

// Trilinear sample at fractional voxel coordinates, clamped to the grid.
template <class T>
double trilinear(const Grid3<T>& g, double x, double y, double z) {
  x = std::clamp(x, 0.0, g.nx - 1.0);
  y = std::clamp(y, 0.0, g.ny - 1.0);
  z = std::clamp(z, 0.0, g.nz - 1.0);
  const int x0 = std::min(static_cast<int>(x), g.nx - 1);
  const int y0 = std::min(static_cast<int>(y), g.ny - 1);
  const int z0 = std::min(static_cast<int>(z), g.nz - 1);
  const int x1 = std::min(x0 + 1, g.nx - 1);
  const int y1 = std::min(y0 + 1, g.ny - 1);
  const int z1 = std::min(z0 + 1, g.nz - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double fz = z - z0;
  auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
  const double c00 = lerp(g.at(x0, y0, z0), g.at(x1, y0, z0), fx);
  const double c10 = lerp(g.at(x0, y1, z0), g.at(x1, y1, z0), fx);
  const double c01 = lerp(g.at(x0, y0, z1), g.at(x1, y0, z1), fx);
  const double c11 = lerp(g.at(x0, y1, z1), g.at(x1, y1, z1), fx);
  return lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz);
}

// Elliptical body cross-section; air outside.
bool inside_body(const PhantomConfig& c, double x_mm, double y_mm) {
  const double ex = (c.grid_shape[0] - 1) * c.voxel_spacing[0];
  const double ey = (c.grid_shape[1] - 1) * c.voxel_spacing[1];
  const double dx = (x_mm - 0.5 * ex) / (0.47 * ex);
  const double dy = (y_mm - 0.5 * ey) / (0.42 * ey);
  return dx * dx + dy * dy <= 1.0;
}

bool fits(const PhantomConfig& c, const BladderGeometry& b) {
  const double cy = std::cos(b.yaw);
  const double sy = std::sin(b.yaw);
  const double a = b.semi_axes[0];
  const double bb = b.semi_axes[1];
  const Vec3 half{std::hypot(a * cy, bb * sy), std::hypot(a * sy, bb * cy), b.semi_axes[2]};
  for (int k = 0; k < 3; ++k) {
    const double lo = c.voxel_spacing[k];
    const double hi = (c.grid_shape[k] - 2) * c.voxel_spacing[k];
    if (b.center[k] - half[k] < lo || b.center[k] + half[k] > hi) return false;
  }
  return true;
}

}  // namespace

void PhantomConfig::validate() const {
  for (int k = 0; k < 3; ++k) {
    require(grid_shape[k] >= 16, "phantom.grid_shape: every axis must be >= 16");
    require(voxel_spacing[k] > 0, "phantom.voxel_spacing: must be positive");
  }
  const auto [lo, hi] = bladder_radius_range;
  require(lo > 0 && hi >= lo, "phantom.bladder_radius_range: need 0 < min <= max");
  for (int k = 0; k < 3; ++k) {
    require(2 * lo < (grid_shape[k] - 3) * voxel_spacing[k],
            "phantom.bladder_radius_range: minimum radius does not fit inside the grid");
  }
  require(bladder_center_jitter >= 0, "phantom.bladder_center_jitter: must be >= 0");
  require(noise_sigma >= 0, "phantom.noise_sigma: must be >= 0");
  require(background_intensity >= 0 && background_intensity <= 1,
          "phantom.background_intensity: must lie in [0,1]");
  require(bladder_intensity >= 0 && bladder_intensity <= 1,
          "phantom.bladder_intensity: must lie in [0,1]");
}

void ApplicatorSpec::validate() const {
  require(radius > 0, "applicator.radius: must be > 0");
  require(norm(axis_direction) > 0, "applicator.axis_direction: must be nonzero");
  require(streak_count >= 0, "applicator.streak_count: must be >= 0");
  require(shadow_band_width >= 0, "applicator.shadow_band_width: must be >= 0");
  require(shadow_attenuation >= 0 && shadow_attenuation <= 1,
          "applicator.shadow_attenuation: must lie in [0,1]");
  require(displacement_magnitude >= 0, "applicator.displacement_magnitude: must be >= 0");
  require(displacement_falloff > 0, "applicator.displacement_falloff: must be > 0");
  require(displacement_magnitude < displacement_falloff,
          "applicator.displacement_magnitude: must be < displacement_falloff so the push "
          "stays one-to-one");
}

bool BladderGeometry::contains(const Vec3& p) const {
  const double dx = p[0] - center[0];
  const double dy = p[1] - center[1];
  const double dz = p[2] - center[2];
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  const double u = (c * dx + s * dy) / semi_axes[0];
  const double v = (-s * dx + c * dy) / semi_axes[1];
  const double w = dz / semi_axes[2];
  return u * u + v * v + w * w <= 1.0;
}

nlohmann::json to_json(const PhantomConfig& c) {
  return {{"grid_shape", c.grid_shape},
          {"voxel_spacing", c.voxel_spacing},
          {"bladder_radius_range", c.bladder_radius_range},
          {"bladder_center_jitter", c.bladder_center_jitter},
          {"background_intensity", c.background_intensity},
          {"bladder_intensity", c.bladder_intensity},
          {"noise_sigma", c.noise_sigma},
          {"seed", c.seed}};
}

PhantomConfig phantom_config_from_json(const nlohmann::json& j) {
  PhantomConfig c;
  c.grid_shape = j.value("grid_shape", c.grid_shape);
  c.voxel_spacing = j.value("voxel_spacing", c.voxel_spacing);
  c.bladder_radius_range = j.value("bladder_radius_range", c.bladder_radius_range);
  c.bladder_center_jitter = j.value("bladder_center_jitter", c.bladder_center_jitter);
  c.background_intensity = j.value("background_intensity", c.background_intensity);
  c.bladder_intensity = j.value("bladder_intensity", c.bladder_intensity);
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  c.seed = j.value("seed", c.seed);
  return c;
}

nlohmann::json to_json(const ApplicatorSpec& a) {
  return {{"axis_entry_point", a.axis_entry_point},
          {"axis_direction", a.axis_direction},
          {"radius", a.radius},
          {"intensity", a.intensity},
          {"streak_count", a.streak_count},
          {"streak_amplitude", a.streak_amplitude},
          {"shadow_band_width", a.shadow_band_width},
          {"shadow_attenuation", a.shadow_attenuation},
          {"displacement_magnitude", a.displacement_magnitude},
          {"displacement_falloff", a.displacement_falloff}};
}

ApplicatorSpec applicator_from_json(const nlohmann::json& j) {
  ApplicatorSpec a;
  a.axis_entry_point = j.value("axis_entry_point", a.axis_entry_point);
  a.axis_direction = j.value("axis_direction", a.axis_direction);
  a.radius = j.value("radius", a.radius);
  a.intensity = j.value("intensity", a.intensity);
  a.streak_count = j.value("streak_count", a.streak_count);
  a.streak_amplitude = j.value("streak_amplitude", a.streak_amplitude);
  a.shadow_band_width = j.value("shadow_band_width", a.shadow_band_width);
  a.shadow_attenuation = j.value("shadow_attenuation", a.shadow_attenuation);
  a.displacement_magnitude = j.value("displacement_magnitude", a.displacement_magnitude);
  a.displacement_falloff = j.value("displacement_falloff", a.displacement_falloff);
  return a;
}

std::string config_hash(const PhantomConfig& config,
                        const std::optional<ApplicatorSpec>& applicator) {
  nlohmann::json j = {{"phantom", to_json(config)}};
  if (applicator) j["applicator"] = to_json(*applicator);
  return hash_hex(fnv1a64(j.dump()));
}

std::uint64_t patient_seed(std::uint64_t seed, const std::string& patient_id) {
  return derive_seed(seed, patient_id);
}

Volume generate_patient(const PhantomConfig& config, const std::string& patient_id) {
  config.validate();
  const auto [nx, ny, nz] = config.grid_shape;
  const Vec3& sp = config.voxel_spacing;
  const std::uint64_t seed = patient_seed(config.seed, patient_id);
  Rng rng(seed);
  std::uniform_real_distribution<double> unit01(0.0, 1.0);

  const Vec3 nominal{0.5 * (nx - 1) * sp[0], 0.5 * (ny - 1) * sp[1], 0.5 * (nz - 1) * sp[2]};
  BladderGeometry bladder;
  bool placed = false;
  for (int attempt = 0; attempt < kMaxPlacementAttempts && !placed; ++attempt) {
    const auto [lo, hi] = config.bladder_radius_range;
    for (int k = 0; k < 3; ++k) {
      bladder.semi_axes[k] = lo + (hi - lo) * unit01(rng);
      bladder.center[k] =
          nominal[k] + config.bladder_center_jitter * (2.0 * unit01(rng) - 1.0);
    }
    bladder.yaw = std::numbers::pi * unit01(rng);
    placed = fits(config, bladder);
  }
  if (!placed) {
    fail(ErrorCode::kValidation, "patient " + patient_id + ": bladder does not fit inside the " +
                                     "grid after " + std::to_string(kMaxPlacementAttempts) +
                                     " placement attempts");
  }

  // Low-frequency tissue texture: a few random plane waves.
  struct Wave {
    Vec3 k;
    double phase;
  };
  std::vector<Wave> waves(4);
  for (auto& w : waves) {
    for (int a = 0; a < 3; ++a) w.k[a] = (2.0 * unit01(rng) - 1.0) * 0.06;
    w.phase = 2.0 * std::numbers::pi * unit01(rng);
  }

  Volume vol;
  vol.intensities = Grid3<float>(nx, ny, nz);
  vol.mask = Grid3<std::uint8_t>(nx, ny, nz);
  vol.spacing = sp;
  vol.domain = Domain::kNA;
  vol.patient_id = patient_id;
  vol.seed = seed;
  vol.config_hash = config_hash(config, std::nullopt);
  vol.bladder = bladder;

  std::normal_distribution<double> noise(0.0, 1.0);
  for (int z = 0; z < nz; ++z) {
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x) {
        const Vec3 p{x * sp[0], y * sp[1], z * sp[2]};
        double v = 0.0;
        if (inside_body(config, p[0], p[1])) {
          double tex = 0.0;
          for (const auto& w : waves) {
            tex += std::sin(w.k[0] * p[0] + w.k[1] * p[1] + w.k[2] * p[2] + w.phase);
          }
          v = config.background_intensity + 0.01 * tex;
        }
        if (bladder.contains(p)) {
          v = config.bladder_intensity;
          vol.mask.at(x, y, z) = 1;
        }
        if (config.noise_sigma > 0) v += config.noise_sigma * noise(rng);
        vol.intensities.at(x, y, z) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  if (count_components(vol.mask) != 1) {
    fail(ErrorCode::kValidation, "patient " + patient_id + ": rasterised bladder is not a " +
                                     "single connected component");
  }
  return vol;
}

double axis_distance(const ApplicatorSpec& spec, const Vec3& spacing, int x, int y, int z) {
  const Vec3 dir = unit(spec.axis_direction);
  const Vec3 v{(x - spec.axis_entry_point[0]) * spacing[0],
               (y - spec.axis_entry_point[1]) * spacing[1],
               (z - spec.axis_entry_point[2]) * spacing[2]};
  const double t = v[0] * dir[0] + v[1] * dir[1] + v[2] * dir[2];
  return norm({v[0] - t * dir[0], v[1] - t * dir[1], v[2] - t * dir[2]});
}

Volume apply_applicator(const Volume& volume, const ApplicatorSpec& spec) {
  if (volume.domain != Domain::kNA) {
    fail(ErrorCode::kValidation,
         "apply_applicator: patient " + volume.patient_id + " is already WA");
  }
  spec.validate();
  const auto& src = volume.intensities;
  const int nx = src.nx;
  const int ny = src.ny;
  const int nz = src.nz;
  const Vec3& sp = volume.spacing;
  const Vec3 dir = unit(spec.axis_direction);
  const Vec3 origin{spec.axis_entry_point[0] * sp[0], spec.axis_entry_point[1] * sp[1],
                    spec.axis_entry_point[2] * sp[2]};

  Volume out = volume;
  out.domain = Domain::kWA;
  out.applicator = spec;

  // Radial offset (mm) of a voxel centre from the axis.
  auto radial = [&](int x, int y, int z) {
    const Vec3 v{x * sp[0] - origin[0], y * sp[1] - origin[1], z * sp[2] - origin[2]};
    const double t = v[0] * dir[0] + v[1] * dir[1] + v[2] * dir[2];
    return Vec3{v[0] - t * dir[0], v[1] - t * dir[1], v[2] - t * dir[2]};
  };

  // (1) Push tissue away from the axis. Tissue at radius s moves out to
  // f(s) = s + M * exp(-s / falloff), which is monotone while M < falloff.
  // Each output voxel at radius d samples the input at radius f^-1(d); voxels
  // closer than f(0) = M take the on-axis value.
  if (spec.displacement_magnitude > 0) {
    const double m_mag = spec.displacement_magnitude;
    const double lambda = spec.displacement_falloff;
    auto source_radius = [&](double d) {
      if (d <= m_mag) return 0.0;
      double s = std::max(0.0, d - m_mag * std::exp(-d / lambda));
      for (int it = 0; it < 30; ++it) {
        const double e = m_mag * std::exp(-s / lambda);
        const double step = (s + e - d) / (1.0 - e / lambda);
        s = std::max(0.0, s - step);
        if (std::abs(step) < 1e-10) break;
      }
      return s;
    };
    for (int z = 0; z < nz; ++z) {
      for (int y = 0; y < ny; ++y) {
        for (int x = 0; x < nx; ++x) {
          const Vec3 r = radial(x, y, z);
          const double d = norm(r);
          if (d < 1e-9) continue;
          const double shift = (d - source_radius(d)) / d;
          const double fx = x - shift * r[0] / sp[0];
          const double fy = y - shift * r[1] / sp[1];
          const double fz = z - shift * r[2] / sp[2];
          out.intensities.at(x, y, z) = static_cast<float>(trilinear(src, fx, fy, fz));
          out.mask.at(x, y, z) = trilinear(volume.mask, fx, fy, fz) >= 0.5 ? 1 : 0;
        }
      }
    }
  }

  // (2) Metal cylinder; (4) shadow band around it. Streaks (3) are added in
  // between so the shadow also dims them.
  Rng rng(derive_seed(volume.seed, "applicator"));
  std::uniform_real_distribution<double> unit01(0.0, 1.0);
  const double phase = std::numbers::pi * unit01(rng);
  const double streak_width = 0.75 * std::min(sp[0], sp[1]);
  const double streak_decay = 40.0;

  for (int z = 0; z < nz; ++z) {
    // Axis crossing of this axial plane, used as the streak origin.
    bool has_streaks = spec.streak_count > 0 && std::abs(dir[2]) > 1e-6;
    double ax = 0.0;
    double ay = 0.0;
    if (has_streaks) {
      const double t = (z * sp[2] - origin[2]) / dir[2];
      ax = origin[0] + t * dir[0];
      ay = origin[1] + t * dir[1];
      has_streaks = ax >= 0 && ax <= (nx - 1) * sp[0] && ay >= 0 && ay <= (ny - 1) * sp[1];
    }
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x) {
        const double d = norm(radial(x, y, z));
        float& v = out.intensities.at(x, y, z);
        if (d <= spec.radius) {
          v = static_cast<float>(spec.intensity);
          out.mask.at(x, y, z) = 0;
          continue;
        }
        double value = v;
        if (has_streaks) {
          const double dx = x * sp[0] - ax;
          const double dy = y * sp[1] - ay;
          const double rho = std::hypot(dx, dy);
          const double fall = std::exp(-std::max(0.0, rho - spec.radius) / streak_decay);
          for (int k = 0; k < spec.streak_count; ++k) {
            const double theta = phase + k * std::numbers::pi / spec.streak_count;
            const double perp = std::abs(-dx * std::sin(theta) + dy * std::cos(theta));
            const double sign = k % 2 == 0 ? 1.0 : -1.0;
            value += sign * spec.streak_amplitude * fall *
                     std::exp(-perp * perp / (2.0 * streak_width * streak_width));
          }
        }
        if (d <= spec.radius + spec.shadow_band_width) value *= 1.0 - spec.shadow_attenuation;
        v = static_cast<float>(std::clamp(value, 0.0, 1.0));
      }
    }
  }

  const int components = count_components(out.mask);
  if (components != 1) {
    fail(ErrorCode::kValidation,
         "apply_applicator: patient " + volume.patient_id + " mask split into " +
             std::to_string(components) +
             " components; reduce displacement_magnitude or move the applicator axis");
  }
  return out;
}

std::vector<Volume> generate_cohort(int n_patients, Domain domain, const PhantomConfig& config,
                                    const std::optional<ApplicatorSpec>& applicator) {
  if (n_patients < 1) {
    fail(ErrorCode::kValidation, "cohort size must be >= 1, got " + std::to_string(n_patients));
  }
  if ((domain == Domain::kWA) != applicator.has_value()) {
    fail(ErrorCode::kValidation, "an applicator spec is required for WA cohorts and only for them");
  }
  std::vector<Volume> cohort;
  cohort.reserve(n_patients);
  for (int i = 0; i < n_patients; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "%s_%03d", std::string(to_string(domain)).c_str(), i);
    try {
      Volume v = generate_patient(config, id);
      if (applicator) {
        v = apply_applicator(v, *applicator);
        v.config_hash = config_hash(config, applicator);
      }
      cohort.push_back(std::move(v));
    } catch (const Error& e) {
      fail(e.code(), std::string("patient ") + id + ": " + e.what());
    }
  }
  return cohort;
}

int count_components(const Grid3<std::uint8_t>& mask) {
  std::vector<std::uint8_t> seen(mask.size(), 0);
  std::vector<std::size_t> stack;
  int components = 0;
  const std::size_t sx = 1;
  const std::size_t sy = mask.nx;
  const std::size_t sz = static_cast<std::size_t>(mask.nx) * mask.ny;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (!mask.data[start] || seen[start]) continue;
    ++components;
    seen[start] = 1;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      const int x = static_cast<int>(i % mask.nx);
      const int y = static_cast<int>((i / sy) % mask.ny);
      const int z = static_cast<int>(i / sz);
      const std::pair<bool, std::size_t> nbrs[] = {
          {x > 0, i - sx},           {x + 1 < mask.nx, i + sx}, {y > 0, i - sy},
          {y + 1 < mask.ny, i + sy}, {z > 0, i - sz},           {z + 1 < mask.nz, i + sz}};
      for (const auto& [ok, j] : nbrs) {
        if (ok && mask.data[j] && !seen[j]) {
          seen[j] = 1;
          stack.push_back(j);
        }
      }
    }
  }
  return components;
}

// ---------------------------------------------------------------------------
// Persistence

void write_volume(const Volume& volume, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& g = volume.intensities;
  {
    std::ofstream os(dir / (volume.patient_id + ".f32"), std::ios::binary | std::ios::trunc);
    if constexpr (std::endian::native == std::endian::little) {
      os.write(reinterpret_cast<const char*>(g.data.data()),
               static_cast<std::streamsize>(g.data.size() * sizeof(float)));
    } else {
      for (float f : g.data) {
        const auto u = std::bit_cast<std::uint32_t>(f);
        const char b[4] = {static_cast<char>(u), static_cast<char>(u >> 8),
                           static_cast<char>(u >> 16), static_cast<char>(u >> 24)};
        os.write(b, 4);
      }
    }
    if (!os) fail(ErrorCode::kIo, "failed writing intensities for " + volume.patient_id);
  }
  {
    std::ofstream os(dir / (volume.patient_id + ".mask.u8"), std::ios::binary | std::ios::trunc);
    os.write(reinterpret_cast<const char*>(volume.mask.data.data()),
             static_cast<std::streamsize>(volume.mask.data.size()));
    if (!os) fail(ErrorCode::kIo, "failed writing mask for " + volume.patient_id);
  }
  nlohmann::json side = {
      {"patient_id", volume.patient_id},
      {"shape", {g.nx, g.ny, g.nz}},
      {"layout", "float32 little-endian, C-order [z][y][x]"},
      {"spacing", volume.spacing},
      {"domain", std::string(to_string(volume.domain))},
      {"seed", volume.seed},
      {"config_hash", volume.config_hash},
      {"bladder",
       {{"center", volume.bladder.center},
        {"semi_axes", volume.bladder.semi_axes},
        {"yaw", volume.bladder.yaw}}}};
  if (volume.applicator) side["applicator"] = to_json(*volume.applicator);
  std::ofstream os(dir / (volume.patient_id + ".json"), std::ios::trunc);
  os << side.dump(2) << '\n';
  if (!os) fail(ErrorCode::kIo, "failed writing sidecar for " + volume.patient_id);
}

Volume read_volume(const std::filesystem::path& dir, const std::string& patient_id) {
  std::ifstream js(dir / (patient_id + ".json"));
  if (!js) fail(ErrorCode::kNotFound, "missing sidecar " + (dir / (patient_id + ".json")).string());
  const auto side = nlohmann::json::parse(js);
  const auto shape = side.at("shape").get<std::array<int, 3>>();
  Volume v;
  v.patient_id = patient_id;
  v.spacing = side.at("spacing").get<Vec3>();
  v.domain = parse_domain(side.at("domain").get<std::string>());
  v.seed = side.at("seed").get<std::uint64_t>();
  v.config_hash = side.at("config_hash").get<std::string>();
  if (side.contains("bladder")) {
    const auto& b = side["bladder"];
    v.bladder.center = b.at("center").get<Vec3>();
    v.bladder.semi_axes = b.at("semi_axes").get<Vec3>();
    v.bladder.yaw = b.at("yaw").get<double>();
  }
  if (side.contains("applicator")) v.applicator = applicator_from_json(side["applicator"]);
  v.intensities = Grid3<float>(shape[0], shape[1], shape[2]);
  v.mask = Grid3<std::uint8_t>(shape[0], shape[1], shape[2]);

  std::ifstream fs(dir / (patient_id + ".f32"), std::ios::binary);
  if (!fs) fail(ErrorCode::kNotFound, "missing intensities for " + patient_id);
  if constexpr (std::endian::native == std::endian::little) {
    fs.read(reinterpret_cast<char*>(v.intensities.data.data()),
            static_cast<std::streamsize>(v.intensities.data.size() * sizeof(float)));
  } else {
    for (float& f : v.intensities.data) {
      unsigned char b[4];
      fs.read(reinterpret_cast<char*>(b), 4);
      f = std::bit_cast<float>(static_cast<std::uint32_t>(b[0] | (b[1] << 8) | (b[2] << 16) |
                                                          (static_cast<std::uint32_t>(b[3]) << 24)));
    }
  }
  if (!fs) fail(ErrorCode::kIo, "truncated intensities for " + patient_id);
  std::ifstream ms(dir / (patient_id + ".mask.u8"), std::ios::binary);
  ms.read(reinterpret_cast<char*>(v.mask.data.data()),
          static_cast<std::streamsize>(v.mask.data.size()));
  if (!ms) fail(ErrorCode::kIo, "truncated mask for " + patient_id);
  return v;
}

}  // namespace dopeseg::phantom
