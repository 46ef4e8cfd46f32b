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

// Experiment configs and the four pipeline commands (generate, train,
// sweep, report) on top of the library modules.
//
// Output layout under output_dir:
//   config.resolved.json          resolved config + content hash
//   cohort/<NA|WA>/<id>.{f32,mask.u8,json}, cohort/patients.csv
//   dataset/split.json, dataset/<split>_manifest.csv, dataset/slices/...
//   train/<model>_<plane>_<n>-<m>/ single training runs
//   sweep/ sweep.json, results.csv, summary.md, figures/, cells/ (cache)

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dopeseg/dataset.hpp"
#include "dopeseg/models.hpp"
#include "dopeseg/phantom.hpp"
#include "dopeseg/sweep.hpp"
#include "dopeseg/training.hpp"

namespace dopeseg::experiment {

struct ExperimentConfig {
  std::filesystem::path output_dir = "runs/default";
  std::uint64_t seed = 2025;

  phantom::PhantomConfig phantom;
  phantom::ApplicatorSpec applicator;
  int n_na = 20;
  int n_wa = 20;

  std::vector<Plane> planes{Plane::kSagittal, Plane::kAxial, Plane::kCoronal};
  int target_size = 128;
  dataset::SplitFractions split;
  dataset::AugConfig augmentation;
  dataset::AssortmentSpec assortment{7, 3, 200, 0};
  int val_total = 50;
  bool write_png = true;

  std::vector<models::ModelSpec> models{models::ModelSpec{}};
  training::TrainConfig training;

  std::vector<sweep::Ratio> ratios = sweep::default_ratios();
  std::vector<std::uint64_t> sweep_seeds{0};
  double epsilon = 0.05;
  sweep::Ratio baseline_ratio{1, 0};
  sweep::Ratio target_ratio{7, 3};
  int workers = 1;

  /// Throws kValidation naming the offending field path.
  void validate() const;
  sweep::SweepConfig sweep_config() const;
};

/// Parses and validates; unknown keys are rejected with their path.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Every field with defaults expanded.
nlohmann::json to_json(const ExperimentConfig& c);
std::string content_hash(const ExperimentConfig& c);

using Logger = std::function<void(const std::string&)>;

struct GenerateSummary {
  int n_na = 0;
  int n_wa = 0;
  std::uint64_t seed = 0;
  std::filesystem::path cohort_dir;
};

/// Writes both cohorts, the patient split and manifests. Refuses to touch an
/// existing cohort unless `force`.
GenerateSummary generate(const ExperimentConfig& config, bool force, const Logger& log = {});

struct Cohorts {
  std::vector<phantom::Volume> na;
  std::vector<phantom::Volume> wa;
  std::string hash;
};

/// Reads the cohort written by generate(); fails when it is missing or was
/// produced by a different phantom config.
Cohorts load_cohorts(const ExperimentConfig& config);

struct PreparedData {
  dataset::PatientSplit split;
  dataset::Pools pools;
  std::string data_hash;
};

PreparedData prepare_data(const ExperimentConfig& config, const Cohorts& cohorts);

struct TrainOutcome {
  std::filesystem::path run_dir;
  training::TrainHistory history;
  metrics::MetricPair test;
  std::size_t test_slices = 0;
};

TrainOutcome train(const ExperimentConfig& config, const sweep::Ratio& ratio, Plane plane,
                   models::Architecture architecture, const Logger& log = {});

struct SweepOptions {
  bool resume = false;
  bool force = false;
  std::optional<int> workers;
  std::function<bool()> cancelled;
};

/// Cell cache: $DOPESEG_CACHE when set, else output_dir/sweep/cells.
std::filesystem::path cache_dir(const ExperimentConfig& config);

/// Runs the configured grid and writes the report. A previous sweep in the
/// same directory requires `resume` (reuse cached cells) or `force`
/// (recompute everything).
sweep::SweepResult run_sweep(const ExperimentConfig& config, const SweepOptions& options,
                             const Logger& log = {});

/// Re-renders a report from `results_dir` (an output dir or its sweep/
/// subdirectory). Returns the directory written.
std::filesystem::path report(const std::filesystem::path& results_dir, bool csv, bool markdown);

}  // namespace dopeseg::experiment
