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

#include "dopeseg/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "dopeseg/image_io.hpp"

namespace dopeseg::sweep {

namespace fs = std::filesystem;

namespace {

constexpr Plane kTableOrder[] = {Plane::kSagittal, Plane::kAxial, Plane::kCoronal};

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string title(Plane p) {
  std::string s(to_string(p));
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string_view to_string(CellStatus s) {
  switch (s) {
    case CellStatus::kDone:
      return "done";
    case CellStatus::kFailed:
      return "failed";
    case CellStatus::kPending:
      return "pending";
  }
  return "?";
}

CellStatus parse_status(std::string_view s) {
  if (s == "done") return CellStatus::kDone;
  if (s == "failed") return CellStatus::kFailed;
  if (s == "pending") return CellStatus::kPending;
  fail(ErrorCode::kValidation, "unknown cell status \"" + std::string(s) + "\"");
}

// Planes of `wanted` in table order.
std::vector<Plane> table_planes(const std::vector<Plane>& wanted) {
  std::vector<Plane> out;
  for (Plane p : kTableOrder) {
    if (std::find(wanted.begin(), wanted.end(), p) != wanted.end()) out.push_back(p);
  }
  return out;
}

std::string cache_key(const SweepConfig& config, const models::ModelSpec& spec,
                      const Ratio& ratio, Plane plane, std::uint64_t seed,
                      const std::string& test_hash, const std::string& data_hash) {
  const nlohmann::json j = {{"format", 1},
                            {"model", models::to_json(spec)},
                            {"training", training::to_json(config.train_config)},
                            {"ratio", ratio.compact()},
                            {"plane", to_string(plane)},
                            {"seed", seed},
                            {"total_samples", config.total_samples},
                            {"val_samples", config.val_samples},
                            {"test_manifest", test_hash},
                            {"data", data_hash}};
  return hash_hex(fnv1a64(j.dump()));
}

image_io::RgbImage gray_panel(const Image& img) {
  image_io::RgbImage out(img.rows, img.cols);
  for (int r = 0; r < img.rows; ++r) {
    for (int c = 0; c < img.cols; ++c) {
      const auto g = static_cast<std::uint8_t>(std::lround(std::clamp(img.at(r, c), 0.0f, 1.0f) * 255));
      auto* px = out.px(r, c);
      px[0] = px[1] = px[2] = g;
    }
  }
  return out;
}

// Blends a mask over a grayscale panel in the given colour.
image_io::RgbImage overlay_panel(const Image& img, const BinaryMask& mask,
                                 const std::uint8_t (&colour)[3]) {
  image_io::RgbImage out = gray_panel(img);
  for (int r = 0; r < img.rows; ++r) {
    for (int c = 0; c < img.cols; ++c) {
      if (!mask.at(r, c)) continue;
      auto* px = out.px(r, c);
      for (int k = 0; k < 3; ++k) px[k] = static_cast<std::uint8_t>((px[k] + 2 * colour[k]) / 3);
    }
  }
  return out;
}

void blit(image_io::RgbImage& dst, const image_io::RgbImage& src, int row0, int col0) {
  for (int r = 0; r < src.rows; ++r) {
    for (int c = 0; c < src.cols; ++c) {
      const auto* s = const_cast<image_io::RgbImage&>(src).px(r, c);
      auto* d = dst.px(row0 + r, col0 + c);
      d[0] = s[0];
      d[1] = s[1];
      d[2] = s[2];
    }
  }
}

}  // namespace

bool operator<(const Ratio& a, const Ratio& b) {
  // Cross-multiplication keeps the comparison exact.
  const long long lhs = static_cast<long long>(a.na) * (b.na + b.wa);
  const long long rhs = static_cast<long long>(b.na) * (a.na + a.wa);
  if (lhs != rhs) return lhs < rhs;
  return std::pair(a.na, a.wa) < std::pair(b.na, b.wa);
}

std::string Ratio::label() const {
  return dataset::AssortmentSpec{na, wa, 1, 0}.label();
}

std::string Ratio::compact() const { return std::to_string(na) + ":" + std::to_string(wa); }

Ratio parse_ratio(std::string_view text) {
  if (text == "Only WA") return {0, 1};
  if (text == "Only NA") return {1, 0};
  const auto colon = text.find(':');
  auto parse_part = [&](std::string_view part) {
    if (part.empty() || part.size() > 6 ||
        !std::all_of(part.begin(), part.end(), [](char ch) { return ch >= '0' && ch <= '9'; })) {
      fail(ErrorCode::kValidation, "ratio \"" + std::string(text) +
                                       "\" is not of the form n:m with non-negative integers");
    }
    return std::stoi(std::string(part));
  };
  if (colon == std::string_view::npos) {
    fail(ErrorCode::kValidation, "ratio \"" + std::string(text) + "\" is missing ':'");
  }
  const Ratio r{parse_part(text.substr(0, colon)), parse_part(text.substr(colon + 1))};
  if (r.na + r.wa == 0) fail(ErrorCode::kValidation, "ratio 0:0 has no samples");
  return r;
}

std::vector<Ratio> default_ratios() {
  std::vector<Ratio> out;
  for (int n = 1; n <= 9; ++n) out.push_back({n, 10 - n});
  out.push_back({0, 1});
  out.push_back({1, 0});
  return out;
}

CriterionResult doping_criterion(double iou_wa, double iou_doped, double epsilon) {
  if (!(iou_wa > 0)) {
    fail(ErrorCode::kInvalidArgument, "doping criterion needs a positive only-WA IoU, got " +
                                          fmt("%g", iou_wa));
  }
  const double margin = (iou_wa - iou_doped) / iou_wa;
  // Scores are reported to four decimals; a margin that equals epsilon in
  // decimal must not fail on binary rounding.
  return {margin <= epsilon + 1e-12, margin};
}

std::optional<Ratio> optimal_ratio(const IouGrid& grid, std::span<const Plane> planes,
                                   double epsilon) {
  const auto base = std::find_if(grid.begin(), grid.end(),
                                 [](const auto& row) { return row.first.only_wa(); });
  for (Plane p : planes) {
    if (base == grid.end() || !base->second.count(p)) {
      fail(ErrorCode::kValidation,
           "only-WA baseline is missing for plane " + std::string(to_string(p)));
    }
  }
  std::optional<Ratio> best;
  for (const auto& [ratio, row] : grid) {
    if (ratio.only_wa()) continue;
    bool all = true;
    for (Plane p : planes) {
      const auto it = row.find(p);
      if (it == row.end() || !doping_criterion(base->second.at(p), it->second, epsilon).pass) {
        all = false;
        break;
      }
    }
    if (all && (!best || *best < ratio)) best = ratio;
  }
  return best;
}

void SweepConfig::validate() const {
  auto require = [](bool cond, const std::string& what) {
    if (!cond) fail(ErrorCode::kValidation, "sweep." + what);
  };
  require(!ratios.empty(), "ratios: at least one ratio is required");
  std::set<std::pair<int, int>> seen;
  for (const auto& r : ratios) {
    require(r.na >= 0 && r.wa >= 0 && r.na + r.wa >= 1,
            "ratios: " + r.compact() + " is not a valid NA:WA ratio");
    require(seen.insert({r.na, r.wa}).second, "ratios: " + r.compact() + " is listed twice");
  }
  require(!planes.empty(), "planes: at least one plane is required");
  require(!model_specs.empty(), "models: at least one model is required");
  for (const auto& m : model_specs) m.validate();
  train_config.validate();
  require(total_samples >= 1, "total_samples: must be >= 1");
  require(val_samples >= 1, "val_samples: must be >= 1");
  require(!seeds.empty(), "seeds: at least one seed is required");
  require(epsilon > 0 && epsilon < 1, "epsilon: must lie in (0, 1)");
  require(workers >= 1, "workers: must be >= 1");
}

nlohmann::json to_json(const SweepConfig& c) {
  nlohmann::json ratios = nlohmann::json::array();
  for (const auto& r : c.ratios) ratios.push_back(r.compact());
  nlohmann::json planes = nlohmann::json::array();
  for (Plane p : c.planes) planes.push_back(to_string(p));
  nlohmann::json specs = nlohmann::json::array();
  for (const auto& m : c.model_specs) specs.push_back(models::to_json(m));
  return {{"ratios", ratios},
          {"planes", planes},
          {"models", specs},
          {"training", training::to_json(c.train_config)},
          {"total_samples", c.total_samples},
          {"val_samples", c.val_samples},
          {"seeds", c.seeds},
          {"epsilon", c.epsilon},
          {"baseline_ratio", c.baseline_ratio.compact()},
          {"target_ratio", c.target_ratio.compact()},
          {"workers", c.workers}};
}

nlohmann::json to_json(const CellResult& c) {
  return {{"ratio", c.ratio.compact()},
          {"label", c.ratio.label()},
          {"plane", to_string(c.plane)},
          {"model", c.model},
          {"seed", c.seed},
          {"key", c.key},
          {"status", to_string(c.status)},
          {"error", c.error},
          {"iou", c.mean.iou},
          {"dsc", c.mean.dsc},
          {"test_slices", c.test_slices},
          {"test_manifest_hash", c.test_manifest_hash},
          {"train_manifest_hash", c.train_manifest_hash},
          {"na_count", c.na_count},
          {"wa_count", c.wa_count},
          {"best_epoch", c.best_epoch},
          {"stopped_epoch", c.stopped_epoch},
          {"seconds", c.seconds}};
}

CellResult cell_from_json(const nlohmann::json& j) {
  CellResult c;
  c.ratio = parse_ratio(j.at("ratio").get<std::string>());
  c.plane = parse_plane(j.at("plane").get<std::string>());
  c.model = j.at("model").get<std::string>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.key = j.at("key").get<std::string>();
  c.status = parse_status(j.at("status").get<std::string>());
  c.error = j.value("error", "");
  c.mean.iou = j.value("iou", 0.0);
  c.mean.dsc = j.value("dsc", 0.0);
  c.test_slices = j.value("test_slices", std::size_t{0});
  c.test_manifest_hash = j.value("test_manifest_hash", "");
  c.train_manifest_hash = j.value("train_manifest_hash", "");
  c.na_count = j.value("na_count", 0);
  c.wa_count = j.value("wa_count", 0);
  c.best_epoch = j.value("best_epoch", 0);
  c.stopped_epoch = j.value("stopped_epoch", 0);
  c.seconds = j.value("seconds", 0.0);
  return c;
}

std::size_t SweepResult::failed() const {
  return static_cast<std::size_t>(std::count_if(
      cells.begin(), cells.end(), [](const CellResult& c) { return c.status == CellStatus::kFailed; }));
}

std::size_t SweepResult::computed() const {
  return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const CellResult& c) {
    return c.status == CellStatus::kDone && !c.from_cache;
  }));
}

std::optional<metrics::MetricPair> SweepResult::mean(const Ratio& ratio, Plane plane,
                                                     const std::string& model) const {
  metrics::MetricPair sum;
  int n = 0;
  for (const auto& c : cells) {
    if (c.status == CellStatus::kDone && c.ratio == ratio && c.plane == plane && c.model == model) {
      sum.iou += c.mean.iou;
      sum.dsc += c.mean.dsc;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return metrics::MetricPair{sum.dsc / n, sum.iou / n};
}

IouGrid SweepResult::iou_grid(const std::string& model) const {
  IouGrid grid;
  for (const auto& r : ratios) {
    for (Plane p : planes) {
      if (const auto m = mean(r, p, model)) grid[r][p] = m->iou;
    }
  }
  return grid;
}

std::optional<Ratio> SweepResult::optimal_ratio(const std::string& model) const {
  return sweep::optimal_ratio(iou_grid(model), planes, epsilon);
}

nlohmann::json to_json(const SweepResult& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells) cells.push_back(to_json(c));
  nlohmann::json ratios = nlohmann::json::array();
  for (const auto& x : r.ratios) ratios.push_back(x.compact());
  nlohmann::json planes = nlohmann::json::array();
  for (Plane p : r.planes) planes.push_back(to_string(p));
  return {{"ratios", ratios},
          {"planes", planes},
          {"models", r.models},
          {"epsilon", r.epsilon},
          {"baseline_ratio", r.baseline_ratio.compact()},
          {"target_ratio", r.target_ratio.compact()},
          {"config_hash", r.config_hash},
          {"test_manifest_hash", r.test_manifest_hash},
          {"started_at", r.started_at},
          {"finished_at", r.finished_at},
          {"cache_dir", r.cache_dir.string()},
          {"cells", cells}};
}

SweepResult sweep_result_from_json(const nlohmann::json& j) {
  SweepResult r;
  for (const auto& x : j.at("ratios")) r.ratios.push_back(parse_ratio(x.get<std::string>()));
  for (const auto& x : j.at("planes")) r.planes.push_back(parse_plane(x.get<std::string>()));
  r.models = j.at("models").get<std::vector<std::string>>();
  r.epsilon = j.value("epsilon", 0.05);
  r.baseline_ratio = parse_ratio(j.value("baseline_ratio", "1:0"));
  r.target_ratio = parse_ratio(j.value("target_ratio", "7:3"));
  r.config_hash = j.value("config_hash", "");
  r.test_manifest_hash = j.value("test_manifest_hash", "");
  r.started_at = j.value("started_at", "");
  r.finished_at = j.value("finished_at", "");
  r.cache_dir = j.value("cache_dir", "");
  for (const auto& c : j.at("cells")) r.cells.push_back(cell_from_json(c));
  return r;
}

int feasible_total(const Ratio& ratio, int wanted, std::size_t na_available,
                   std::size_t wa_available) {
  for (int t = wanted; t >= 1; --t) {
    const dataset::AssortmentSpec s{ratio.na, ratio.wa, t, 0};
    if (s.na_count() <= static_cast<int>(na_available) &&
        s.wa_count() <= static_cast<int>(wa_available)) {
      return t;
    }
  }
  return 0;
}

CellRun run_cell(const SweepConfig& config, const models::ModelSpec& spec, const Ratio& ratio,
                 Plane plane, std::uint64_t seed, const dataset::Pools& pools) {
  const std::string model_name(models::to_string(spec.architecture));
  const std::uint64_t cs = cell_seed(seed, ratio, plane, model_name);
  const dataset::AssortmentSpec train_spec{ratio.na, ratio.wa, config.total_samples,
                                           derive_seed(cs, "train-set")};
  const auto& na_val = pools.na_val.at(plane);
  const auto& wa_val = pools.wa_val.at(plane);
  const int val_total = feasible_total(ratio, config.val_samples, na_val.size(), wa_val.size());
  if (val_total < 1) {
    fail(ErrorCode::kValidation, "validation pools for " + std::string(to_string(plane)) +
                                     " cannot supply any sample at ratio " + ratio.label());
  }
  const dataset::AssortmentSpec val_spec{ratio.na, ratio.wa, val_total, derive_seed(cs, "val-set")};
  auto train_manifest =
      dataset::assort(pools.na_train.at(plane), pools.wa_train.at(plane), train_spec);
  auto val_manifest = dataset::assort(na_val, wa_val, val_spec, dataset::Split::kVal);

  auto model = models::Model::build(spec, derive_seed(cs, "init"));
  training::TrainConfig tc = config.train_config;
  tc.seed = derive_seed(cs, "batches");
  auto history =
      training::train(model, pools.resolve(train_manifest), pools.resolve(val_manifest), tc);

  std::vector<const dataset::SliceSample*> test;
  for (const auto& s : pools.test.at(plane)) test.push_back(&s);
  auto records = training::evaluate(model, test, tc.threshold);
  const auto summary = metrics::aggregate(records, std::span<const Plane>(&plane, 1)).front();
  return CellRun{std::move(model),          std::move(history),
                 tc,                        std::move(train_manifest),
                 std::move(val_manifest),   std::move(records),
                 summary};
}

std::uint64_t cell_seed(std::uint64_t seed, const Ratio& ratio, Plane plane,
                        const std::string& model) {
  return derive_seed(seed, "cell/" + ratio.compact() + "/" + std::string(to_string(plane)) + "/" +
                               model);
}

const dataset::SliceSample& figure_slice(const dataset::Pools& pools, Plane plane) {
  const auto it = pools.test.find(plane);
  if (it == pools.test.end() || it->second.empty()) {
    fail(ErrorCode::kNotFound, "no test slices for plane " + std::string(to_string(plane)));
  }
  const dataset::SliceSample* best = nullptr;
  std::size_t best_area = 0;
  for (const auto& s : it->second) {
    if (s.variant != 0) continue;
    const auto area = static_cast<std::size_t>(std::count(s.mask.data.begin(), s.mask.data.end(), 1));
    if (!best || area > best_area || (area == best_area && s.key() < best->key())) {
      best = &s;
      best_area = area;
    }
  }
  return *best;
}

SweepResult run_sweep(const SweepConfig& config, const dataset::Pools& pools,
                      const RunOptions& options) {
  config.validate();
  if (options.cache_dir.empty()) fail(ErrorCode::kInvalidArgument, "sweep needs a cache directory");
  for (Plane p : config.planes) {
    if (!pools.test.count(p) || pools.test.at(p).empty()) {
      fail(ErrorCode::kValidation,
           "pools have no test slices for plane " + std::string(to_string(p)));
    }
  }
  fs::create_directories(options.cache_dir);

  SweepResult result;
  result.ratios = config.ratios;
  result.planes = config.planes;
  for (const auto& m : config.model_specs) result.models.emplace_back(models::to_string(m.architecture));
  result.epsilon = config.epsilon;
  result.baseline_ratio = config.baseline_ratio;
  result.target_ratio = config.target_ratio;
  result.config_hash = hash_hex(fnv1a64(to_json(config).dump() + options.data_hash));
  result.test_manifest_hash = pools.test_manifest.hash();
  result.started_at = utc_timestamp();
  result.cache_dir = options.cache_dir;

  struct Job {
    const models::ModelSpec* spec;
    Ratio ratio;
    Plane plane;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& spec : config.model_specs) {
    for (Plane plane : config.planes) {
      for (const auto& ratio : config.ratios) {
        for (auto seed : config.seeds) jobs.push_back({&spec, ratio, plane, seed});
      }
    }
  }
  result.cells.resize(jobs.size());

  std::mutex log_mutex;
  auto log = [&](const std::string& line) {
    if (!options.log) return;
    std::lock_guard lock(log_mutex);
    options.log(line);
  };

  auto run_job = [&](std::size_t index) {
    const Job& job = jobs[index];
    CellResult& cell = result.cells[index];
    cell.ratio = job.ratio;
    cell.plane = job.plane;
    cell.model = std::string(models::to_string(job.spec->architecture));
    cell.seed = job.seed;
    cell.test_manifest_hash = result.test_manifest_hash;
    cell.key = cache_key(config, *job.spec, job.ratio, job.plane, job.seed,
                         result.test_manifest_hash, options.data_hash);
    const fs::path dir = options.cache_dir / cell.key;
    const fs::path record = dir / "cell.json";
    const std::string name = cell.model + " " + cell.ratio.label() + " " +
                             std::string(to_string(cell.plane)) + " seed " +
                             std::to_string(cell.seed);
    if (!options.force && fs::exists(record)) {
      cell = cell_from_json(nlohmann::json::parse(read_file(record)));
      cell.from_cache = true;
      log("cached   " + name);
      return;
    }
    const auto t0 = std::chrono::steady_clock::now();
    try {
      auto run = run_cell(config, *job.spec, job.ratio, job.plane, job.seed, pools);
      auto& model = run.model;
      const auto& history = run.history;
      const auto& train_manifest = run.train_manifest;
      const auto& tc = run.train_config;
      cell.train_manifest_hash = train_manifest.hash();
      cell.na_count = train_manifest.na_count;
      cell.wa_count = train_manifest.wa_count;
      cell.best_epoch = history.best_epoch;
      cell.stopped_epoch = history.stopped_epoch;
      cell.mean = run.summary.mean;
      cell.test_slices = run.summary.count;

      fs::create_directories(dir);
      write_file_atomic(dir / "history.csv", history.to_csv());
      write_file_atomic(dir / "train_manifest.csv", train_manifest.to_csv());
      models::save_checkpoint(model, dir / "model.dsck",
                              {{"training", training::to_json(tc)},
                               {"ratio", job.ratio.compact()},
                               {"plane", to_string(job.plane)}});
      const auto& fig = figure_slice(pools, job.plane);
      const dataset::SliceSample* fig_ptr = &fig;
      const nn::Tensor fig_prob =
          model.forward(training::stack_images(std::span<const dataset::SliceSample* const>(&fig_ptr, 1)));
      BinaryMask fig_pred(fig.mask.rows, fig.mask.cols);
      fig_pred.data = models::binarize(fig_prob.data, tc.threshold);
      image_io::write_mask(dir / "prediction.png", fig_pred);
      image_io::write_gray16(dir / "figure_image.png", fig.image);
      image_io::write_mask(dir / "figure_mask.png", fig.mask);
      cell.status = CellStatus::kDone;
      cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      write_file_atomic(record, to_json(cell).dump(2));
      log("done     " + name + "  IoU " + metrics::format4(cell.mean.iou) + "  DSC " +
          metrics::format4(cell.mean.dsc));
    } catch (const std::exception& e) {
      cell.status = CellStatus::kFailed;
      cell.error = e.what();
      cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      // Failures are recorded beside the cache but never count as completed.
      std::error_code ec;
      fs::create_directories(dir, ec);
      if (!ec) {
        try {
          write_file_atomic(dir / "failed.json", to_json(cell).dump(2));
        } catch (const std::exception&) {
        }
      }
      log("failed   " + name + ": " + cell.error);
    }
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      if (options.cancelled && options.cancelled()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      run_job(i);
    }
  };
  const int n_workers = std::min<int>(config.workers, static_cast<int>(jobs.size()));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    for (int w = 0; w < n_workers; ++w) threads.emplace_back(worker);
  }
  // Jobs never started keep their identity so the caller sees what is left.
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    auto& cell = result.cells[i];
    if (!cell.key.empty()) continue;
    cell.ratio = jobs[i].ratio;
    cell.plane = jobs[i].plane;
    cell.model = std::string(models::to_string(jobs[i].spec->architecture));
    cell.seed = jobs[i].seed;
    cell.test_manifest_hash = result.test_manifest_hash;
    cell.key = cache_key(config, *jobs[i].spec, cell.ratio, cell.plane, cell.seed,
                         result.test_manifest_hash, options.data_hash);
  }
  result.finished_at = utc_timestamp();
  return result;
}

ImprovementReport improvement_report(const std::map<std::string, IouGrid>& grids,
                                     std::span<const Plane> planes, const Ratio& baseline,
                                     const Ratio& target) {
  ImprovementReport rep;
  rep.baseline = baseline;
  rep.target = target;
  for (const auto& [model, grid] : grids) {
    double sum = 0.0;
    for (Plane p : planes) {
      auto get = [&](const Ratio& r) {
        const auto row = grid.find(r);
        if (row == grid.end() || !row->second.count(p)) {
          fail(ErrorCode::kNotFound, "improvement report: " + model + " has no " + r.label() +
                                         " result for plane " + std::string(to_string(p)));
        }
        return row->second.at(p);
      };
      const double b = get(baseline);
      const double t = get(target);
      if (!(b > 0)) {
        fail(ErrorCode::kNumeric, "improvement report: " + model + " baseline IoU is zero for " +
                                      std::string(to_string(p)));
      }
      const double rel = (t - b) / b;
      rep.rows.push_back({model, p, b, t, rel});
      sum += rel;
    }
    rep.model_mean[model] = sum / static_cast<double>(planes.size());
  }
  return rep;
}

ImprovementReport improvement_report(const SweepResult& result, const Ratio& baseline,
                                     const Ratio& target) {
  std::map<std::string, IouGrid> grids;
  for (const auto& m : result.models) grids[m] = result.iou_grid(m);
  const auto planes = table_planes(result.planes);
  return improvement_report(grids, planes, baseline, target);
}

std::string ImprovementReport::to_csv() const {
  std::ostringstream os;
  os << "# relative improvement = " << kFormula << "\n";
  os << "model,plane,iou_" << baseline.compact() << ",iou_" << target.compact()
     << ",relative_improvement\n";
  for (const auto& r : rows) {
    os << r.model << ',' << to_string(r.plane) << ',' << metrics::format4(r.baseline) << ','
       << metrics::format4(r.target) << ',' << metrics::format4(r.relative) << '\n';
  }
  for (const auto& [model, mean] : model_mean) {
    os << model << ",mean,,," << metrics::format4(mean) << '\n';
  }
  return os.str();
}

std::string ImprovementReport::to_markdown() const {
  std::ostringstream os;
  os << "Relative improvement = " << kFormula << ", baseline " << baseline.label()
     << ", target " << target.label() << ".\n\n";
  os << "| Model | Plane | IoU " << baseline.label() << " | IoU " << target.label()
     << " | Improvement |\n|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    os << "| " << r.model << " | " << title(r.plane) << " | " << metrics::format4(r.baseline)
       << " | " << metrics::format4(r.target) << " | " << fmt("%+.2f%%", 100.0 * r.relative)
       << " |\n";
  }
  for (const auto& [model, mean] : model_mean) {
    os << "| " << model << " | mean |  |  | " << fmt("%+.2f%%", 100.0 * mean) << " |\n";
  }
  return os.str();
}

std::string results_csv(const SweepResult& result) {
  std::ostringstream os;
  os << "model,ratio,iou_sagittal,iou_axial,iou_coronal,dice_sagittal,dice_axial,dice_coronal\n";
  for (const auto& model : result.models) {
    for (const auto& ratio : result.ratios) {
      os << model << ',' << ratio.label();
      std::string dice;
      for (Plane p : kTableOrder) {
        const auto m = result.mean(ratio, p, model);
        os << ',' << (m ? metrics::format4(m->iou) : "");
        dice += "," + (m ? metrics::format4(m->dsc) : std::string());
      }
      os << dice << '\n';
    }
  }
  return os.str();
}

std::string summary_markdown(const SweepResult& result) {
  const auto planes = table_planes(result.planes);
  std::ostringstream os;
  os << "# Doping sweep\n\n";
  os << "- config hash: `" << result.config_hash << "`\n";
  os << "- test manifest hash: `" << result.test_manifest_hash << "`\n";
  const std::size_t done = result.cells.size() - result.failed() -
                           static_cast<std::size_t>(std::count_if(
                               result.cells.begin(), result.cells.end(),
                               [](const CellResult& c) { return c.status == CellStatus::kPending; }));
  os << "- cells: " << result.cells.size() << " requested, " << done << " done, "
     << result.failed() << " failed\n";
  os << "- started " << result.started_at << ", finished " << result.finished_at << "\n\n";

  for (const auto& model : result.models) {
    os << "## " << model << "\n\n";
    os << "| Training Set Ratio (NA:WA) |";
    for (Plane p : planes) os << " IoU " << title(p) << " |";
    for (Plane p : planes) os << " Dice " << title(p) << " |";
    os << "\n|---|";
    for (std::size_t i = 0; i < 2 * planes.size(); ++i) os << "---|";
    os << "\n";
    for (const auto& ratio : result.ratios) {
      os << "| " << ratio.label() << " |";
      for (Plane p : planes) {
        const auto m = result.mean(ratio, p, model);
        os << ' ' << (m ? metrics::format4(m->iou) : "") << " |";
      }
      for (Plane p : planes) {
        const auto m = result.mean(ratio, p, model);
        os << ' ' << (m ? metrics::format4(m->dsc) : "") << " |";
      }
      os << "\n";
    }
    os << "\n";

    const IouGrid grid = result.iou_grid(model);
    const auto base = std::find_if(grid.begin(), grid.end(),
                                   [](const auto& row) { return row.first.only_wa(); });
    bool have_base = base != grid.end();
    for (Plane p : planes) have_base = have_base && base->second.count(p);
    if (!have_base) {
      os << "Criterion not evaluated: the Only WA baseline is incomplete.\n\n";
      continue;
    }
    os << "Criterion: (IoU_WA - IoU_doped) / IoU_WA <= " << fmt("%g", result.epsilon) << "\n\n";
    os << "| Ratio |";
    for (Plane p : planes) os << " Margin " << title(p) << " |";
    os << " Pass |\n|---|";
    for (std::size_t i = 0; i <= planes.size(); ++i) os << "---|";
    os << "\n";
    for (const auto& ratio : result.ratios) {
      if (ratio.only_wa()) continue;
      const auto row = grid.find(ratio);
      os << "| " << ratio.label() << " |";
      bool all = row != grid.end();
      for (Plane p : planes) {
        if (row == grid.end() || !row->second.count(p)) {
          os << "  |";
          all = false;
          continue;
        }
        const auto c = doping_criterion(base->second.at(p), row->second.at(p), result.epsilon);
        all = all && c.pass;
        os << ' ' << metrics::format4(c.margin) << " |";
      }
      os << ' ' << (all ? "yes" : "no") << " |\n";
    }
    os << "\n";
    const auto best = optimal_ratio(grid, planes, result.epsilon);
    if (best) {
      os << "Optimal ratio for " << model << ": **" << best->label() << "** (margins:";
      for (Plane p : planes) {
        const auto c =
            doping_criterion(base->second.at(p), grid.at(*best).at(p), result.epsilon);
        os << ' ' << to_string(p) << ' ' << metrics::format4(c.margin)
           << (p == planes.back() ? "" : ",");
      }
      os << ").\n\n";
    } else {
      os << "No ratio satisfies the criterion in every plane for " << model << ".\n\n";
    }
  }

  try {
    const auto rep = improvement_report(result, result.baseline_ratio, result.target_ratio);
    os << "## Improvement\n\n" << rep.to_markdown() << "\n";
  } catch (const Error&) {
    os << "## Improvement\n\nNot available: " << result.baseline_ratio.label() << " or "
       << result.target_ratio.label() << " results are missing.\n\n";
  }

  if (result.failed() > 0) {
    os << "## Error annex\n\n";
    for (const auto& c : result.cells) {
      if (c.status != CellStatus::kFailed) continue;
      os << "- " << c.model << ' ' << c.ratio.label() << ' ' << to_string(c.plane) << " seed "
         << c.seed << " (`" << c.key << "`): " << c.error << "\n";
    }
    os << "\n";
  }
  return os.str();
}

void write_overlay_figures(const SweepResult& result, const fs::path& dir) {
  static constexpr std::uint8_t kGreen[3] = {40, 220, 60};
  static constexpr std::uint8_t kRed[3] = {230, 40, 40};
  for (Plane p : table_planes(result.planes)) {
    // First completed cell per (model, ratio); figure inputs come from any.
    std::map<std::pair<std::string, std::string>, fs::path> cell_dirs;
    fs::path source;
    for (const auto& c : result.cells) {
      if (c.status != CellStatus::kDone || c.plane != p) continue;
      const fs::path d = result.cache_dir / c.key;
      if (!fs::exists(d / "prediction.png")) continue;
      cell_dirs.emplace(std::pair(c.model, c.ratio.compact()), d);
      if (source.empty()) source = d;
    }
    if (source.empty()) continue;
    const Image image = image_io::read_gray16(source / "figure_image.png");
    const BinaryMask truth = image_io::read_mask(source / "figure_mask.png");
    const int h = image.rows;
    const int w = image.cols;
    const int gap = 2;
    const int cols = 2 + static_cast<int>(result.ratios.size());
    const int rows = static_cast<int>(result.models.size());
    image_io::RgbImage canvas(rows * (h + gap) - gap, cols * (w + gap) - gap);
    std::fill(canvas.data.begin(), canvas.data.end(), std::uint8_t{255});
    for (int r = 0; r < rows; ++r) {
      const int top = r * (h + gap);
      blit(canvas, gray_panel(image), top, 0);
      blit(canvas, overlay_panel(image, truth, kGreen), top, w + gap);
      for (std::size_t k = 0; k < result.ratios.size(); ++k) {
        const auto it = cell_dirs.find({result.models[r], result.ratios[k].compact()});
        const int left = static_cast<int>(k + 2) * (w + gap);
        if (it == cell_dirs.end()) continue;  // blank panel for missing cells
        const BinaryMask pred = image_io::read_mask(it->second / "prediction.png");
        blit(canvas, overlay_panel(image, pred, kRed), top, left);
      }
    }
    image_io::write_rgb(dir / ("overlay_" + std::string(to_string(p)) + ".png"), canvas);
    std::ostringstream legend;
    legend << "columns: original, ground truth";
    for (const auto& r : result.ratios) legend << ", " << r.label();
    legend << "\nrows:";
    for (const auto& m : result.models) legend << ' ' << m;
    legend << '\n';
    write_file_atomic(dir / ("overlay_" + std::string(to_string(p)) + ".txt"), legend.str());
  }
}

void write_report(const SweepResult& result, const fs::path& dir, bool csv, bool markdown) {
  fs::create_directories(dir);
  if (csv) write_file_atomic(dir / "results.csv", results_csv(result));
  if (markdown) write_file_atomic(dir / "summary.md", summary_markdown(result));
  try {
    const auto rep = improvement_report(result, result.baseline_ratio, result.target_ratio);
    if (csv) write_file_atomic(dir / "improvements.csv", rep.to_csv());
  } catch (const Error&) {
  }
  if (result.failed() > 0) {
    std::ostringstream os;
    os << "# Failed cells\n\n";
    for (const auto& c : result.cells) {
      if (c.status == CellStatus::kFailed) {
        os << "- " << c.model << ' ' << c.ratio.label() << ' ' << to_string(c.plane) << " seed "
           << c.seed << ": " << c.error << '\n';
      }
    }
    write_file_atomic(dir / "errors.md", os.str());
  }
  write_overlay_figures(result, dir / "figures");
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  static std::atomic<unsigned> counter{0};
  fs::path tmp = path;
  tmp += ".tmp" + std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) fail(ErrorCode::kIo, "failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kNotFound, "cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace dopeseg::sweep
