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

#include "dopeseg/experiment.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "dopeseg/image_io.hpp"

namespace dopeseg::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Typed, path-aware access to one JSON object. Every key read is recorded
// so leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(ErrorCode::kValidation, where() + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  T get(const std::string& key, T fallback) {
    used_.insert(key);
    if (!j_.contains(key)) return fallback;
    try {
      const json& v = j_.at(key);
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw json::type_error::create(302, "expected a boolean", nullptr);
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) {
          throw json::type_error::create(302, "expected an integer", nullptr);
        }
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) {
            throw json::type_error::create(302, "expected a non-negative integer", nullptr);
          }
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw json::type_error::create(302, "expected a number", nullptr);
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw json::type_error::create(302, "expected a string", nullptr);
      }
      return v.get<T>();
    } catch (const json::exception& e) {
      std::string msg = e.what();
      const auto pos = msg.find("] ");
      if (pos != std::string::npos) msg = msg.substr(pos + 2);
      fail(ErrorCode::kValidation, where(key) + ": " + msg);
    }
  }

  const json* child(const std::string& key) {
    used_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string where(const std::string& key = {}) const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!used_.count(key)) fail(ErrorCode::kValidation, where(key) + ": unknown field");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

// Re-raises a validation failure with a field path prefix unless the
// message already carries one.
template <class F>
void with_path(const std::string& path, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    const std::string msg = e.what();
    if (msg.rfind(path, 0) == 0) throw;
    fail(e.code(), path + ": " + msg);
  }
}

std::vector<Plane> parse_planes(const json& j, const std::string& path) {
  if (!j.is_array()) fail(ErrorCode::kValidation, path + ": expected an array of plane names");
  std::vector<Plane> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string at = path + "[" + std::to_string(i) + "]";
    if (!j[i].is_string()) fail(ErrorCode::kValidation, at + ": expected a string");
    with_path(at, [&] { out.push_back(parse_plane(j[i].get<std::string>())); });
  }
  return out;
}

sweep::Ratio ratio_at(const json& j, const std::string& path) {
  if (!j.is_string()) fail(ErrorCode::kValidation, path + ": expected a string such as \"7:3\"");
  sweep::Ratio r;
  with_path(path, [&] { r = sweep::parse_ratio(j.get<std::string>()); });
  return r;
}

phantom::PhantomConfig read_phantom(Section& s, std::uint64_t seed) {
  phantom::PhantomConfig c;
  c.grid_shape = s.get("grid_shape", c.grid_shape);
  c.voxel_spacing = s.get("voxel_spacing", c.voxel_spacing);
  c.bladder_radius_range = s.get("bladder_radius_range", c.bladder_radius_range);
  c.bladder_center_jitter = s.get("bladder_center_jitter", c.bladder_center_jitter);
  c.background_intensity = s.get("background_intensity", c.background_intensity);
  c.bladder_intensity = s.get("bladder_intensity", c.bladder_intensity);
  c.noise_sigma = s.get("noise_sigma", c.noise_sigma);
  c.seed = s.get<std::uint64_t>("seed", seed);
  return c;
}

phantom::ApplicatorSpec read_applicator(Section& s) {
  phantom::ApplicatorSpec a;
  a.axis_entry_point = s.get("axis_entry_point", a.axis_entry_point);
  a.axis_direction = s.get("axis_direction", a.axis_direction);
  a.radius = s.get("radius", a.radius);
  a.intensity = s.get("intensity", a.intensity);
  a.streak_count = s.get("streak_count", a.streak_count);
  a.streak_amplitude = s.get("streak_amplitude", a.streak_amplitude);
  a.shadow_band_width = s.get("shadow_band_width", a.shadow_band_width);
  a.shadow_attenuation = s.get("shadow_attenuation", a.shadow_attenuation);
  a.displacement_magnitude = s.get("displacement_magnitude", a.displacement_magnitude);
  a.displacement_falloff = s.get("displacement_falloff", a.displacement_falloff);
  return a;
}

training::TrainConfig read_training(Section& s) {
  training::TrainConfig c;
  c.batch_size = s.get("batch_size", c.batch_size);
  c.max_epochs = s.get("max_epochs", c.max_epochs);
  c.optimizer = s.get("optimizer", c.optimizer);
  c.learning_rate = s.get("learning_rate", c.learning_rate);
  c.beta1 = s.get("beta1", c.beta1);
  c.beta2 = s.get("beta2", c.beta2);
  c.adam_epsilon = s.get("adam_epsilon", c.adam_epsilon);
  c.early_stop_patience = s.get("early_stop_patience", c.early_stop_patience);
  c.early_stop_min_delta = s.get("early_stop_min_delta", c.early_stop_min_delta);
  c.loss = s.get("loss", c.loss);
  c.smooth = s.get("smooth", c.smooth);
  c.threshold = s.get("threshold", c.threshold);
  c.seed = s.get("seed", c.seed);
  return c;
}

std::string cohort_hash(const ExperimentConfig& c) {
  return hash_hex(fnv1a64(phantom::config_hash(c.phantom, c.applicator) + "/" +
                          std::to_string(c.n_na) + "/" + std::to_string(c.n_wa)));
}

void write_json(const fs::path& path, const json& j) {
  sweep::write_file_atomic(path, j.dump(2) + "\n");
}

// Resolved config plus its content hash, written beside every artifact set.
void write_resolved(const ExperimentConfig& c, const fs::path& dir) {
  write_json(dir / "config.resolved.json", {{"config", to_json(c)}, {"content_hash", content_hash(c)}});
}

std::string patients_csv(const std::vector<phantom::Volume>& cohort) {
  std::ostringstream os;
  for (const auto& v : cohort) {
    os << v.patient_id << ',' << to_string(v.domain) << ',' << v.seed << ',' << v.config_hash
       << '\n';
  }
  return os.str();
}

std::string pool_csv(const std::map<Plane, std::vector<dataset::SliceSample>>& pool,
                     dataset::Split split) {
  dataset::DatasetManifest m;
  m.split = split;
  for (const auto& [plane, samples] : pool) {
    for (const auto& s : samples) m.entries.push_back(dataset::entry_for(s));
  }
  return m.to_csv();
}

void write_slices(const std::map<Plane, std::vector<dataset::SliceSample>>& pool,
                  const fs::path& root) {
  for (const auto& [plane, samples] : pool) {
    for (const auto& s : samples) {
      image_io::write_gray16(root / s.image_path(), s.image);
      image_io::write_mask(root / s.mask_path(), s.mask);
    }
  }
}

std::string run_name(models::Architecture a, Plane p, const sweep::Ratio& r) {
  return std::string(models::to_string(a)) + "_" + std::string(to_string(p)) + "_" +
         std::to_string(r.na) + "-" + std::to_string(r.wa);
}

}  // namespace

void ExperimentConfig::validate() const {
  auto require = [](bool cond, const std::string& what) {
    if (!cond) fail(ErrorCode::kValidation, what);
  };
  require(!output_dir.empty(), "output_dir: must not be empty");
  with_path("phantom", [&] { phantom.validate(); });
  try {
    applicator.validate();
  } catch (const Error& e) {
    fail(e.code(), std::string("phantom.") + e.what());
  }
  require(n_na >= 1, "phantom.n_na: must be >= 1");
  require(n_wa >= 1, "phantom.n_wa: must be >= 1");
  require(!planes.empty(), "dataset.planes: at least one plane is required");
  std::set<Plane> unique(planes.begin(), planes.end());
  require(unique.size() == planes.size(), "dataset.planes: duplicate plane");
  require(target_size >= 16, "dataset.target_size: must be >= 16");
  split.validate();
  augmentation.validate();
  with_path("dataset.assortment", [&] { assortment.validate(); });
  require(val_total >= 1, "dataset.val_total: must be >= 1");
  require(!models.empty(), "models: at least one model is required");
  std::set<models::Architecture> archs;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const std::string at = "models[" + std::to_string(i) + "]";
    with_path(at, [&] { models[i].validate(); });
    const int stride = 1 << models[i].depth;
    require(target_size % stride == 0,
            at + ".depth: dataset.target_size " + std::to_string(target_size) +
                " is not divisible by 2^depth = " + std::to_string(stride));
    require(archs.insert(models[i].architecture).second,
            at + ".architecture: listed twice");
  }
  training.validate();
  require(!ratios.empty(), "sweep.ratios: at least one ratio is required");
  std::set<std::pair<int, int>> seen;
  for (const auto& r : ratios) {
    require(seen.insert({r.na, r.wa}).second, "sweep.ratios: " + r.compact() + " is listed twice");
  }
  require(!sweep_seeds.empty(), "sweep.seeds: at least one seed is required");
  require(epsilon > 0 && epsilon < 1, "sweep.epsilon: must lie in (0, 1)");
  require(workers >= 1, "sweep.workers: must be >= 1");
}

sweep::SweepConfig ExperimentConfig::sweep_config() const {
  sweep::SweepConfig s;
  s.ratios = ratios;
  s.planes = planes;
  s.model_specs = models;
  s.train_config = training;
  s.total_samples = assortment.total;
  s.val_samples = val_total;
  s.seeds = sweep_seeds;
  s.epsilon = epsilon;
  s.baseline_ratio = baseline_ratio;
  s.target_ratio = target_ratio;
  s.workers = workers;
  return s;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  Section root(j, "");
  c.output_dir = root.get<std::string>("output_dir", c.output_dir.string());
  c.seed = root.get("seed", c.seed);

  if (const json* p = root.child("phantom")) {
    Section s(*p, "phantom");
    c.phantom = read_phantom(s, c.seed);
    c.n_na = s.get("n_na", c.n_na);
    c.n_wa = s.get("n_wa", c.n_wa);
    if (const json* a = s.child("applicator")) {
      Section as(*a, "phantom.applicator");
      c.applicator = read_applicator(as);
      as.finish();
    }
    s.finish();
  } else {
    c.phantom.seed = c.seed;
  }

  if (const json* d = root.child("dataset")) {
    Section s(*d, "dataset");
    if (const json* planes = s.child("planes")) c.planes = parse_planes(*planes, "dataset.planes");
    c.target_size = s.get("target_size", c.target_size);
    if (const json* f = s.child("split_fractions")) {
      Section fs_(*f, "dataset.split_fractions");
      c.split.train = fs_.get("train", c.split.train);
      c.split.val = fs_.get("val", c.split.val);
      c.split.test = fs_.get("test", c.split.test);
      fs_.finish();
    }
    if (const json* a = s.child("augmentation")) {
      Section as(*a, "dataset.augmentation");
      c.augmentation.hflip = as.get("hflip", c.augmentation.hflip);
      c.augmentation.rotation_deg = as.get("rotation_deg", c.augmentation.rotation_deg);
      c.augmentation.intensity_jitter = as.get("intensity_jitter", c.augmentation.intensity_jitter);
      c.augmentation.copies = as.get("copies", c.augmentation.copies);
      as.finish();
    }
    if (const json* a = s.child("assortment")) {
      Section as(*a, "dataset.assortment");
      if (const json* r = as.child("ratio")) {
        const auto ratio = ratio_at(*r, "dataset.assortment.ratio");
        c.assortment.na_parts = ratio.na;
        c.assortment.wa_parts = ratio.wa;
      }
      c.assortment.total = as.get("total", c.assortment.total);
      c.assortment.seed = as.get("seed", c.assortment.seed);
      as.finish();
    }
    c.val_total = s.get("val_total", c.val_total);
    c.write_png = s.get("write_png", c.write_png);
    s.finish();
  }

  if (const json* m = root.child("models")) {
    if (!m->is_array()) fail(ErrorCode::kValidation, "models: expected an array");
    c.models.clear();
    for (std::size_t i = 0; i < m->size(); ++i) {
      const std::string at = "models[" + std::to_string(i) + "]";
      const json& mj = (*m)[i];
      if (mj.is_string()) {
        models::ModelSpec spec;
        with_path(at, [&] { spec.architecture = models::parse_architecture(mj.get<std::string>()); });
        c.models.push_back(spec);
        continue;
      }
      Section s(mj, at);
      models::ModelSpec spec;
      if (!s.has("architecture")) fail(ErrorCode::kValidation, at + ".architecture: required");
      const auto name = s.get<std::string>("architecture", "");
      with_path(at + ".architecture", [&] { spec.architecture = models::parse_architecture(name); });
      spec.depth = s.get("depth", spec.depth);
      spec.base_width = s.get("base_width", spec.base_width);
      spec.init = s.get("init", spec.init);
      spec.output_activation = s.get("output_activation", spec.output_activation);
      s.finish();
      c.models.push_back(spec);
    }
  }

  if (const json* t = root.child("training")) {
    Section s(*t, "training");
    c.training = read_training(s);
    s.finish();
  }

  if (const json* w = root.child("sweep")) {
    Section s(*w, "sweep");
    if (const json* r = s.child("ratios")) {
      if (!r->is_array()) fail(ErrorCode::kValidation, "sweep.ratios: expected an array");
      c.ratios.clear();
      for (std::size_t i = 0; i < r->size(); ++i) {
        c.ratios.push_back(ratio_at((*r)[i], "sweep.ratios[" + std::to_string(i) + "]"));
      }
    }
    c.sweep_seeds = s.get("seeds", c.sweep_seeds);
    c.epsilon = s.get("epsilon", c.epsilon);
    if (const json* b = s.child("baseline_ratio")) c.baseline_ratio = ratio_at(*b, "sweep.baseline_ratio");
    if (const json* t = s.child("target_ratio")) c.target_ratio = ratio_at(*t, "sweep.target_ratio");
    c.workers = s.get("workers", c.workers);
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kNotFound, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kValidation, path.string() + ": invalid JSON: " + e.what());
  }
  return config_from_json(j);
}

json to_json(const ExperimentConfig& c) {
  json phantom = phantom::to_json(c.phantom);
  phantom["n_na"] = c.n_na;
  phantom["n_wa"] = c.n_wa;
  phantom["applicator"] = phantom::to_json(c.applicator);
  json planes = json::array();
  for (Plane p : c.planes) planes.push_back(to_string(p));
  json models = json::array();
  for (const auto& m : c.models) models.push_back(models::to_json(m));
  json ratios = json::array();
  for (const auto& r : c.ratios) ratios.push_back(r.compact());
  return {{"output_dir", c.output_dir.string()},
          {"seed", c.seed},
          {"phantom", phantom},
          {"dataset",
           {{"planes", planes},
            {"target_size", c.target_size},
            {"split_fractions",
             {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}}},
            {"augmentation", dataset::to_json(c.augmentation)},
            {"assortment",
             {{"ratio", sweep::Ratio{c.assortment.na_parts, c.assortment.wa_parts}.compact()},
              {"total", c.assortment.total},
              {"seed", c.assortment.seed}}},
            {"val_total", c.val_total},
            {"write_png", c.write_png}}},
          {"models", models},
          {"training", training::to_json(c.training)},
          {"sweep",
           {{"ratios", ratios},
            {"seeds", c.sweep_seeds},
            {"epsilon", c.epsilon},
            {"baseline_ratio", c.baseline_ratio.compact()},
            {"target_ratio", c.target_ratio.compact()},
            {"workers", c.workers}}}};
}

std::string content_hash(const ExperimentConfig& c) {
  return hash_hex(fnv1a64(to_json(c).dump()));
}

GenerateSummary generate(const ExperimentConfig& config, bool force, const Logger& log) {
  config.validate();
  const fs::path out = config.output_dir;
  const fs::path cohort_dir = out / "cohort";
  const fs::path marker = cohort_dir / "generate.json";
  if (fs::exists(marker) && !force) {
    fail(ErrorCode::kAlreadyExists, "a cohort already exists in " + cohort_dir.string() +
                                        "; pass --force to regenerate it");
  }
  if (force) {
    fs::remove_all(cohort_dir);
    fs::remove_all(out / "dataset");
  }

  Cohorts cohorts{
      phantom::generate_cohort(config.n_na, Domain::kNA, config.phantom, std::nullopt),
      phantom::generate_cohort(config.n_wa, Domain::kWA, config.phantom, config.applicator),
      cohort_hash(config)};
  // Split and slice before writing anything, so a bad split leaves no files.
  const PreparedData data = prepare_data(config, cohorts);
  fs::create_directories(cohort_dir);
  for (const auto& v : cohorts.na) phantom::write_volume(v, cohort_dir / "NA");
  for (const auto& v : cohorts.wa) phantom::write_volume(v, cohort_dir / "WA");
  sweep::write_file_atomic(cohort_dir / "patients.csv",
                           "patient_id,domain,seed,config_hash\n" + patients_csv(cohorts.na) +
                               patients_csv(cohorts.wa));
  if (log) {
    log("generated " + std::to_string(cohorts.na.size()) + " NA and " +
        std::to_string(cohorts.wa.size()) + " WA patients (seed " +
        std::to_string(config.phantom.seed) + ")");
  }

  const fs::path ds = out / "dataset";
  write_json(ds / "split.json", {{"na_train", data.split.na_train},
                                 {"na_val", data.split.na_val},
                                 {"wa_train", data.split.wa_train},
                                 {"wa_val", data.split.wa_val},
                                 {"wa_test", data.split.wa_test},
                                 {"seed", config.seed},
                                 {"data_hash", data.data_hash}});
  sweep::write_file_atomic(ds / "test_manifest.csv", data.pools.test_manifest.to_csv());
  std::string train_csv = pool_csv(data.pools.na_train, dataset::Split::kTrain);
  std::string wa_train_csv = pool_csv(data.pools.wa_train, dataset::Split::kTrain);
  sweep::write_file_atomic(ds / "train_manifest.csv",
                           train_csv + wa_train_csv.substr(wa_train_csv.find('\n') + 1));
  std::string val_csv = pool_csv(data.pools.na_val, dataset::Split::kVal);
  std::string wa_val_csv = pool_csv(data.pools.wa_val, dataset::Split::kVal);
  sweep::write_file_atomic(ds / "val_manifest.csv",
                           val_csv + wa_val_csv.substr(wa_val_csv.find('\n') + 1));
  if (config.write_png) {
    for (const auto* pool : {&data.pools.na_train, &data.pools.wa_train, &data.pools.na_val,
                             &data.pools.wa_val, &data.pools.test}) {
      write_slices(*pool, ds);
    }
  }
  std::vector<std::string> na_ids;
  std::vector<std::string> wa_ids;
  for (const auto& v : cohorts.na) na_ids.push_back(v.patient_id);
  for (const auto& v : cohorts.wa) wa_ids.push_back(v.patient_id);
  write_json(marker, {{"cohort_hash", cohorts.hash},
                      {"phantom_config_hash", phantom::config_hash(config.phantom, config.applicator)},
                      {"seed", config.phantom.seed},
                      {"na", na_ids},
                      {"wa", wa_ids},
                      {"created_at", sweep::utc_timestamp()}});
  write_resolved(config, out);
  return {config.n_na, config.n_wa, config.phantom.seed, cohort_dir};
}

Cohorts load_cohorts(const ExperimentConfig& config) {
  const fs::path cohort_dir = fs::path(config.output_dir) / "cohort";
  const fs::path marker = cohort_dir / "generate.json";
  if (!fs::exists(marker)) {
    fail(ErrorCode::kNotFound, "no cohort in " + cohort_dir.string() + "; run generate first");
  }
  const json m = json::parse(sweep::read_file(marker));
  Cohorts c;
  c.hash = cohort_hash(config);
  if (m.at("cohort_hash").get<std::string>() != c.hash) {
    fail(ErrorCode::kValidation, "the cohort in " + cohort_dir.string() +
                                     " was generated from a different phantom config; rerun "
                                     "generate with --force");
  }
  for (const auto& id : m.at("na")) {
    c.na.push_back(phantom::read_volume(cohort_dir / "NA", id.get<std::string>()));
  }
  for (const auto& id : m.at("wa")) {
    c.wa.push_back(phantom::read_volume(cohort_dir / "WA", id.get<std::string>()));
  }
  return c;
}

PreparedData prepare_data(const ExperimentConfig& config, const Cohorts& cohorts) {
  std::vector<std::string> na_ids;
  std::vector<std::string> wa_ids;
  for (const auto& v : cohorts.na) na_ids.push_back(v.patient_id);
  for (const auto& v : cohorts.wa) wa_ids.push_back(v.patient_id);
  PreparedData d;
  d.split = dataset::split_patients(na_ids, wa_ids, config.split, derive_seed(config.seed, "split"));
  d.pools = dataset::build_pools(cohorts.na, cohorts.wa, d.split, config.planes, config.target_size,
                                 config.augmentation, derive_seed(config.seed, "augment"));
  json planes = json::array();
  for (Plane p : config.planes) planes.push_back(to_string(p));
  const json key = {{"cohort", cohorts.hash},
                    {"planes", planes},
                    {"target_size", config.target_size},
                    {"split", {config.split.train, config.split.val, config.split.test}},
                    {"augmentation", dataset::to_json(config.augmentation)},
                    {"seed", config.seed}};
  d.data_hash = hash_hex(fnv1a64(key.dump()));
  return d;
}

TrainOutcome train(const ExperimentConfig& config, const sweep::Ratio& ratio, Plane plane,
                   models::Architecture architecture, const Logger& log) {
  config.validate();
  if (std::find(config.planes.begin(), config.planes.end(), plane) == config.planes.end()) {
    fail(ErrorCode::kValidation,
         "plane " + std::string(to_string(plane)) + " is not listed in dataset.planes");
  }
  models::ModelSpec spec;
  spec.architecture = architecture;
  for (const auto& m : config.models) {
    if (m.architecture == architecture) spec = m;
  }
  spec.validate();
  spec.check_input(config.target_size, config.target_size);
  const Cohorts cohorts = load_cohorts(config);
  const PreparedData data = prepare_data(config, cohorts);

  sweep::SweepConfig sc = config.sweep_config();
  sc.ratios = {ratio};
  sc.planes = {plane};
  sc.model_specs = {spec};
  const std::uint64_t seed = config.sweep_seeds.front();
  if (log) {
    log("training " + std::string(models::to_string(architecture)) + " on " + ratio.label() +
        " " + std::string(to_string(plane)) + " (" + std::to_string(sc.total_samples) +
        " slices)");
  }
  auto run = sweep::run_cell(sc, spec, ratio, plane, seed, data.pools);

  TrainOutcome out;
  out.run_dir = fs::path(config.output_dir) / "train" / run_name(architecture, plane, ratio);
  fs::create_directories(out.run_dir);
  models::save_checkpoint(run.model, out.run_dir / "model.dsck",
                          {{"training", training::to_json(run.train_config)},
                           {"ratio", ratio.compact()},
                           {"plane", to_string(plane)}});
  sweep::write_file_atomic(out.run_dir / "history.csv", run.history.to_csv());
  sweep::write_file_atomic(out.run_dir / "train_manifest.csv", run.train_manifest.to_csv());
  sweep::write_file_atomic(out.run_dir / "val_manifest.csv", run.val_manifest.to_csv());
  out.history = run.history;
  out.test = run.summary.mean;
  out.test_slices = run.summary.count;
  write_json(out.run_dir / "metrics.json",
             {{"ratio", ratio.compact()},
              {"label", ratio.label()},
              {"plane", to_string(plane)},
              {"model", models::to_string(architecture)},
              {"test_iou", out.test.iou},
              {"test_dsc", out.test.dsc},
              {"test_slices", out.test_slices},
              {"test_manifest_hash", data.pools.test_manifest.hash()},
              {"train_manifest_hash", run.train_manifest.hash()},
              {"best_epoch", run.history.best_epoch},
              {"stopped_epoch", run.history.stopped_epoch}});
  write_resolved(config, out.run_dir);
  return out;
}

fs::path cache_dir(const ExperimentConfig& config) {
  if (const char* env = std::getenv("DOPESEG_CACHE"); env && *env) return env;
  return fs::path(config.output_dir) / "sweep" / "cells";
}

sweep::SweepResult run_sweep(const ExperimentConfig& config, const SweepOptions& options,
                             const Logger& log) {
  ExperimentConfig c = config;
  if (options.workers) c.workers = *options.workers;
  c.validate();
  const fs::path dir = fs::path(c.output_dir) / "sweep";
  if (fs::exists(dir / "sweep.json") && !options.resume && !options.force) {
    fail(ErrorCode::kAlreadyExists, "a sweep already exists in " + dir.string() +
                                        "; pass --resume to reuse finished cells or --force "
                                        "to recompute them");
  }
  const Cohorts cohorts = load_cohorts(c);
  const PreparedData data = prepare_data(c, cohorts);
  sweep::RunOptions ro;
  ro.cache_dir = cache_dir(c);
  ro.data_hash = data.data_hash;
  ro.force = options.force;
  ro.cancelled = options.cancelled;
  ro.log = log;
  sweep::SweepResult result = sweep::run_sweep(c.sweep_config(), data.pools, ro);
  fs::create_directories(dir);
  write_json(dir / "sweep.json", sweep::to_json(result));
  write_resolved(c, dir);
  sweep::write_report(result, dir, true, true);
  return result;
}

fs::path report(const fs::path& results_dir, bool csv, bool markdown) {
  fs::path dir = results_dir;
  if (!fs::exists(dir / "sweep.json") && fs::exists(dir / "sweep" / "sweep.json")) {
    dir = dir / "sweep";
  }
  if (!fs::exists(dir / "sweep.json")) {
    fail(ErrorCode::kNotFound, "no sweep results in " + results_dir.string());
  }
  const auto result = sweep::sweep_result_from_json(json::parse(sweep::read_file(dir / "sweep.json")));
  const bool any = std::any_of(result.cells.begin(), result.cells.end(), [](const auto& cell) {
    return cell.status == sweep::CellStatus::kDone;
  });
  if (!any) fail(ErrorCode::kValidation, "sweep in " + dir.string() + " has no completed cells");
  sweep::write_report(result, dir, csv, markdown);
  return dir;
}

}  // namespace dopeseg::experiment
