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

// dopeseg command line: generate, train, sweep, report.
//
// Exit status: 0 success, 1 any error, 2 sweep finished with failed or
// unrun cells.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "dopeseg/dopeseg.h"

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_sigint(int) { g_interrupted.store(true); }

int cancel_requested(void*) { return g_interrupted.load() ? 1 : 0; }

void print_line(const char* line, void*) {
  std::fprintf(stderr, "%s\n", line);
  std::fflush(stderr);
}

struct ExperimentDeleter {
  void operator()(ds_experiment* e) const { ds_experiment_free(e); }
};
using Experiment = std::unique_ptr<ds_experiment, ExperimentDeleter>;

struct Owned {
  char* s = nullptr;
  ~Owned() { ds_string_free(s); }
};

int report_error(ds_status status) {
  std::fprintf(stderr, "error (%s): %s\n", ds_status_name(status), ds_last_error());
  return status == DS_PARTIAL_FAILURE || status == DS_CANCELLED ? 2 : 1;
}

// Config path plus the overrides every config-driven command accepts.
struct ConfigArgs {
  std::string path;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* cmd) {
    cmd->add_option("config", path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "override output_dir");
    cmd->add_option("--seed", seed, "override the experiment seed");
  }

  ds_status open(Experiment& exp) const {
    ds_experiment* raw = nullptr;
    if (ds_status s = ds_experiment_load(path.c_str(), &raw); s != DS_OK) return s;
    exp.reset(raw);
    if (out) {
      if (ds_status s = ds_experiment_set_output_dir(raw, out->c_str()); s != DS_OK) return s;
    }
    if (seed) {
      if (ds_status s = ds_experiment_set_seed(raw, *seed); s != DS_OK) return s;
    }
    return ds_experiment_set_log(raw, print_line, nullptr);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dopeseg: data-doping experiments for bladder segmentation"};
  app.set_version_flag("--version", ds_version());
  app.require_subcommand(1);

  ConfigArgs gen_args;
  bool gen_force = false;
  auto* gen = app.add_subcommand("generate", "synthesize NA and WA phantom cohorts");
  gen_args.attach(gen);
  gen->add_flag("--force", gen_force, "replace an existing cohort");

  ConfigArgs train_args;
  std::string ratio;
  std::string plane;
  std::string model = "unet";
  auto* tr = app.add_subcommand("train", "train one model on one assorted dataset");
  train_args.attach(tr);
  tr->add_option("--ratio", ratio, "NA:WA ratio, e.g. 7:3")->required();
  tr->add_option("--plane", plane, "sagittal, axial or coronal")->required();
  tr->add_option("--model", model, "architecture")->capture_default_str();

  ConfigArgs sweep_args;
  bool resume = false;
  bool sweep_force = false;
  int workers = 0;
  auto* sw = app.add_subcommand("sweep", "run the ratio x plane x model grid");
  sweep_args.attach(sw);
  sw->add_flag("--resume", resume, "reuse finished cells from a previous run");
  sw->add_flag("--force", sweep_force, "recompute every cell");
  sw->add_option("--workers", workers, "parallel cells (default: config)")
      ->check(CLI::PositiveNumber);

  std::string results_dir;
  std::string format = "both";
  auto* rep = app.add_subcommand("report", "render tables and figures from a sweep");
  rep->add_option("dir", results_dir, "output dir or its sweep/ subdirectory")
      ->required()
      ->check(CLI::ExistingDirectory);
  rep->add_option("--format", format, "csv, md or both")
      ->check(CLI::IsMember({"csv", "md", "both"}))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  Experiment exp;
  if (gen->parsed()) {
    if (ds_status s = gen_args.open(exp); s != DS_OK) return report_error(s);
    if (ds_status s = ds_generate(exp.get(), gen_force); s != DS_OK) return report_error(s);
    return 0;
  }

  if (tr->parsed()) {
    if (ds_status s = train_args.open(exp); s != DS_OK) return report_error(s);
    ds_train_result r{};
    Owned dir;
    if (ds_status s = ds_train(exp.get(), ratio.c_str(), plane.c_str(), model.c_str(), &r, &dir.s);
        s != DS_OK) {
      return report_error(s);
    }
    std::printf("test IoU %.4f  DSC %.4f  (%zu slices, best epoch %d, stopped at %d)\n",
                r.test_iou, r.test_dsc, r.test_slices, r.best_epoch, r.stopped_epoch);
    std::printf("run dir: %s\n", dir.s);
    return 0;
  }

  if (sw->parsed()) {
    if (ds_status s = sweep_args.open(exp); s != DS_OK) return report_error(s);
    std::signal(SIGINT, on_sigint);
    std::signal(SIGTERM, on_sigint);
    ds_sweep_summary sum{};
    const ds_status s =
        ds_sweep(exp.get(), resume, sweep_force, workers, cancel_requested, nullptr, &sum);
    if (s == DS_OK || s == DS_PARTIAL_FAILURE || s == DS_CANCELLED) {
      std::printf("cells: %zu done (%zu computed, %zu cached), %zu failed, %zu not run\n",
                  sum.done, sum.computed, sum.done - sum.computed, sum.failed, sum.pending);
    }
    return s == DS_OK ? 0 : report_error(s);
  }

  Owned written;
  const bool csv = format != "md";
  const bool md = format != "csv";
  if (ds_status s = ds_report(results_dir.c_str(), csv, md, &written.s); s != DS_OK) {
    return report_error(s);
  }
  std::printf("report written to %s\n", written.s);
  return 0;
}
