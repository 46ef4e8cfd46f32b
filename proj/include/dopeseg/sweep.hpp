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

// Ratio sweeps: one cell per (ratio, plane, model, seed), each assorting a
// training set, training, and scoring on the shared WA-only test manifest.
// Cells are cached on disk under a content hash so interrupted sweeps
// resume without recomputation.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dopeseg/dataset.hpp"
#include "dopeseg/metrics.hpp"
#include "dopeseg/models.hpp"
#include "dopeseg/training.hpp"

namespace dopeseg::sweep {

/// An NA:WA training-set ratio n:m.
struct Ratio {
  int na = 0;
  int wa = 0;

  double na_fraction() const { return static_cast<double>(na) / (na + wa); }
  /// "07:03", "Only WA" or "Only NA".
  std::string label() const;
  /// "7:3".
  std::string compact() const;
  bool only_wa() const { return na == 0 && wa > 0; }
  bool only_na() const { return wa == 0 && na > 0; }
  /// Orders by NA fraction; ratios with the same fraction compare by parts.
  friend bool operator<(const Ratio& a, const Ratio& b);
  friend bool operator==(const Ratio&, const Ratio&) = default;
};

/// Accepts "n:m" with non-negative integers, plus the labels "Only WA" and
/// "Only NA". "0:0" is rejected.
Ratio parse_ratio(std::string_view text);
/// 01:09 through 09:01, then Only WA (0:1) and Only NA (1:0).
std::vector<Ratio> default_ratios();

struct CriterionResult {
  bool pass = false;
  double margin = 0.0;  // (iou_wa - iou_doped) / iou_wa
};

/// Relative IoU shortfall against the only-WA baseline; passes when the
/// shortfall is at most epsilon. Requires iou_wa > 0.
CriterionResult doping_criterion(double iou_wa, double iou_doped, double epsilon);

/// Mean IoU per ratio and plane for one model.
using IouGrid = std::map<Ratio, std::map<Plane, double>>;

/// Largest NA fraction whose criterion passes in every requested plane;
/// the only-WA row is the baseline and must cover every plane.
std::optional<Ratio> optimal_ratio(const IouGrid& grid, std::span<const Plane> planes,
                                   double epsilon);

struct SweepConfig {
  std::vector<Ratio> ratios = default_ratios();
  std::vector<Plane> planes{Plane::kSagittal, Plane::kAxial, Plane::kCoronal};
  std::vector<models::ModelSpec> model_specs{models::ModelSpec{}};
  training::TrainConfig train_config;
  int total_samples = 1000;
  int val_samples = 200;
  std::vector<std::uint64_t> seeds{0};
  double epsilon = 0.05;
  Ratio baseline_ratio{1, 0};
  Ratio target_ratio{7, 3};
  int workers = 1;

  void validate() const;
};

nlohmann::json to_json(const SweepConfig& c);

enum class CellStatus { kDone, kFailed, kPending };

struct CellResult {
  Ratio ratio;
  Plane plane = Plane::kAxial;
  std::string model;  // architecture name
  std::uint64_t seed = 0;
  std::string key;    // cache key
  CellStatus status = CellStatus::kPending;
  std::string error;
  bool from_cache = false;
  metrics::MetricPair mean;  // over test slices of this plane
  std::size_t test_slices = 0;
  std::string test_manifest_hash;
  std::string train_manifest_hash;
  int na_count = 0;
  int wa_count = 0;
  int best_epoch = 0;
  int stopped_epoch = 0;
  double seconds = 0.0;
};

nlohmann::json to_json(const CellResult& c);
CellResult cell_from_json(const nlohmann::json& j);

struct SweepResult {
  std::vector<CellResult> cells;
  std::vector<Ratio> ratios;
  std::vector<Plane> planes;
  std::vector<std::string> models;
  double epsilon = 0.05;
  Ratio baseline_ratio{1, 0};
  Ratio target_ratio{7, 3};
  std::string config_hash;
  std::string test_manifest_hash;
  std::string started_at;
  std::string finished_at;
  std::filesystem::path cache_dir;

  std::size_t failed() const;
  std::size_t computed() const;  // done and not loaded from cache
  /// Mean over seeds of the completed cells for one (ratio, plane, model).
  std::optional<metrics::MetricPair> mean(const Ratio& ratio, Plane plane,
                                          const std::string& model) const;
  IouGrid iou_grid(const std::string& model) const;
  std::optional<Ratio> optimal_ratio(const std::string& model) const;
};

nlohmann::json to_json(const SweepResult& r);
SweepResult sweep_result_from_json(const nlohmann::json& j);

struct RunOptions {
  std::filesystem::path cache_dir;
  /// Identifies the pools' contents (cohorts, preprocessing, split).
  std::string data_hash;
  /// Recompute cells even when cached.
  bool force = false;
  /// Polled between cells; returning true leaves the remaining cells pending.
  std::function<bool()> cancelled;
  std::function<void(const std::string&)> log;
};

/// Seed of one cell, derived from (replicate seed, ratio, plane, model).
std::uint64_t cell_seed(std::uint64_t seed, const Ratio& ratio, Plane plane,
                        const std::string& model);

/// Largest total <= wanted whose NA and WA counts the pools can supply at
/// this ratio; 0 when none.
int feasible_total(const Ratio& ratio, int wanted, std::size_t na_available,
                   std::size_t wa_available);

/// Everything one cell produces before it is written anywhere.
struct CellRun {
  models::Model model;
  training::TrainHistory history;
  training::TrainConfig train_config;  // with the cell's batch-order seed
  dataset::DatasetManifest train_manifest;
  dataset::DatasetManifest val_manifest;
  std::vector<metrics::SliceRecord> records;  // test slices of the plane
  metrics::PlaneSummary summary;
};

/// Assorts training and (ratio-matched) validation sets, trains from a
/// fresh model and evaluates on the plane's test slices.
CellRun run_cell(const SweepConfig& config, const models::ModelSpec& spec, const Ratio& ratio,
                 Plane plane, std::uint64_t seed, const dataset::Pools& pools);

/// Test slice drawn in the overlay figures for a plane: the one with the
/// largest mask, ties broken by key.
const dataset::SliceSample& figure_slice(const dataset::Pools& pools, Plane plane);

SweepResult run_sweep(const SweepConfig& config, const dataset::Pools& pools,
                      const RunOptions& options);

struct Improvement {
  std::string model;
  Plane plane = Plane::kAxial;
  double baseline = 0.0;
  double target = 0.0;
  double relative = 0.0;  // (target - baseline) / baseline
};

struct ImprovementReport {
  Ratio baseline;
  Ratio target;
  std::vector<Improvement> rows;
  std::map<std::string, double> model_mean;

  static constexpr const char* kFormula = "(IoU_target - IoU_baseline) / IoU_baseline";
  std::string to_csv() const;
  std::string to_markdown() const;
};

/// Relative IoU improvement per (model, plane) plus each model's mean.
/// Every model must have both ratios in every plane.
ImprovementReport improvement_report(const SweepResult& result, const Ratio& baseline,
                                     const Ratio& target);
/// Same computation over explicit per-model grids.
ImprovementReport improvement_report(const std::map<std::string, IouGrid>& grids,
                                     std::span<const Plane> planes, const Ratio& baseline,
                                     const Ratio& target);

/// One row per (model, ratio): model, ratio, iou_sagittal, iou_axial, iou_coronal,
/// dice_sagittal, dice_axial, dice_coronal. Missing cells are blank.
std::string results_csv(const SweepResult& result);
std::string summary_markdown(const SweepResult& result);

/// Writes results.csv and/or summary.md, improvements.csv when both the
/// baseline and target ratios are present, errors.md when any cell failed,
/// and the overlay figures when the figure slices are available.
void write_report(const SweepResult& result, const std::filesystem::path& dir, bool csv,
                  bool markdown);

/// Original / ground truth / one prediction per ratio, one row per model.
void write_overlay_figures(const SweepResult& result, const std::filesystem::path& dir);

/// Atomically writes text to a file (temporary file, then rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);
std::string utc_timestamp();

}  // namespace dopeseg::sweep
