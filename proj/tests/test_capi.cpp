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

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "dopeseg/dopeseg.h"

namespace fs = std::filesystem;

namespace {

const char* kTiny = R"({
  "seed": 5,
  "phantom": {"grid_shape": [48, 48, 32], "bladder_radius_range": [8.0, 12.0],
              "bladder_center_jitter": 2.0, "n_na": 5, "n_wa": 5,
              "applicator": {"axis_entry_point": [23.5, 37.0, 0.0]}},
  "dataset": {"planes": ["axial"], "target_size": 16,
              "assortment": {"ratio": "7:3", "total": 20}, "val_total": 8, "write_png": false},
  "models": [{"architecture": "unet", "depth": 2, "base_width": 8}],
  "training": {"batch_size": 8, "max_epochs": 2, "early_stop_patience": 1},
  "sweep": {"ratios": ["1:0", "7:3", "0:1"]}
})";

struct Collected {
  std::vector<std::string> lines;
};

void collect(const char* line, void* user) { static_cast<Collected*>(user)->lines.emplace_back(line); }

int cancel_after_two(void* user) { return ++*static_cast<int*>(user) > 2; }

}  // namespace

TEST_CASE("status names and version") {
  CHECK(std::string(ds_version()) == "0.1.0");
  CHECK(std::string(ds_status_name(DS_OK)) == "ok");
  CHECK(std::string(ds_status_name(DS_PARTIAL_FAILURE)) == "partial failure");
}

TEST_CASE("null arguments are rejected with a message") {
  ds_experiment* exp = nullptr;
  CHECK(ds_experiment_load(nullptr, &exp) == DS_INVALID_ARGUMENT);
  CHECK(std::string(ds_last_error()).find("null") != std::string::npos);
  double v = 0;
  CHECK(ds_iou(nullptr, nullptr, 4, &v) == DS_INVALID_ARGUMENT);
  CHECK(ds_model_forward(nullptr, nullptr, 1, 16, 16, nullptr) == DS_INVALID_ARGUMENT);
  CHECK(ds_report("x", 0, 0, nullptr) == DS_INVALID_ARGUMENT);
}

TEST_CASE("errors map to status codes") {
  ds_experiment* exp = nullptr;
  CHECK(ds_experiment_load("/nonexistent/config.json", &exp) == DS_NOT_FOUND);
  CHECK(exp == nullptr);
  CHECK(ds_experiment_from_json("{\"bogus\": 1}", &exp) == DS_VALIDATION);
  CHECK(std::string(ds_last_error()).find("bogus") != std::string::npos);
  CHECK(ds_experiment_from_json("{not json", &exp) == DS_VALIDATION);
  REQUIRE(ds_experiment_from_json("{}", &exp) == DS_OK);
  CHECK(ds_train(exp, "0:0", "axial", "unet", nullptr, nullptr) == DS_VALIDATION);
  ds_experiment_free(exp);
}

TEST_CASE("metrics and criterion") {
  const std::uint8_t a[] = {1, 1, 0, 0};
  const std::uint8_t b[] = {1, 0, 1, 0};
  double iou = 0;
  double dsc = 0;
  REQUIRE(ds_iou(a, b, 4, &iou) == DS_OK);
  REQUIRE(ds_dsc(a, b, 4, &dsc) == DS_OK);
  CHECK(iou == doctest::Approx(1.0 / 3.0));
  CHECK(dsc == doctest::Approx(0.5));
  CHECK(ds_iou(nullptr, nullptr, 0, &iou) == DS_OK);
  CHECK(iou == 1.0);
  int pass = -1;
  double margin = 0;
  REQUIRE(ds_doping_criterion(0.9202, 0.8831, 0.05, &pass, &margin) == DS_OK);
  CHECK(pass == 1);
  CHECK(margin == doctest::Approx(0.0403).epsilon(1e-3));
  CHECK(ds_doping_criterion(0.0, 0.5, 0.05, &pass, &margin) == DS_INVALID_ARGUMENT);
}

TEST_CASE("model handles") {
  ds_model* m = nullptr;
  CHECK(ds_model_create("{\"architecture\": \"segnet\"}", 0, &m) == DS_VALIDATION);
  REQUIRE(ds_model_create("{\"architecture\": \"half_unet\", \"depth\": 2, \"base_width\": 8}", 1,
                          &m) == DS_OK);
  std::size_t n = 0;
  REQUIRE(ds_model_param_count(m, &n) == DS_OK);
  CHECK(n > 0);
  std::vector<float> img(2 * 16 * 16, 0.5f);
  std::vector<float> out(img.size(), -1.0f);
  REQUIRE(ds_model_forward(m, img.data(), 2, 16, 16, out.data()) == DS_OK);
  for (float p : out) REQUIRE((p > 0.0f && p < 1.0f));
  CHECK(ds_model_forward(m, img.data(), 1, 18, 18, out.data()) == DS_SHAPE);

  const auto path = fs::temp_directory_path() / "dopeseg_test_capi.dsck";
  REQUIRE(ds_model_save(m, path.c_str()) == DS_OK);
  ds_model* back = nullptr;
  REQUIRE(ds_model_load(path.c_str(), &back) == DS_OK);
  std::vector<float> out2(img.size());
  REQUIRE(ds_model_forward(back, img.data(), 2, 16, 16, out2.data()) == DS_OK);
  CHECK(out2 == out);
  ds_model_free(back);
  ds_model_free(m);
  fs::remove(path);
}

TEST_CASE("pipeline through the C API") {
  const auto out = fs::temp_directory_path() / "dopeseg_test_capi_run";
  fs::remove_all(out);
  ds_experiment* exp = nullptr;
  REQUIRE(ds_experiment_from_json(kTiny, &exp) == DS_OK);
  REQUIRE(ds_experiment_set_output_dir(exp, out.c_str()) == DS_OK);
  Collected log;
  ds_experiment_set_log(exp, collect, &log);

  char* resolved = nullptr;
  REQUIRE(ds_experiment_resolved_json(exp, &resolved) == DS_OK);
  CHECK(std::string(resolved).find(out.string()) != std::string::npos);
  ds_string_free(resolved);

  CHECK(ds_train(exp, "7:3", "axial", "unet", nullptr, nullptr) == DS_NOT_FOUND);
  REQUIRE(ds_generate(exp, 0) == DS_OK);
  CHECK(ds_generate(exp, 0) == DS_ALREADY_EXISTS);

  ds_train_result tr{};
  char* run_dir = nullptr;
  REQUIRE(ds_train(exp, "Only NA", "axial", "unet", &tr, &run_dir) == DS_OK);
  CHECK(fs::exists(fs::path(run_dir) / "model.dsck"));
  CHECK(tr.test_slices > 0);
  CHECK(tr.test_iou >= 0.0);
  ds_string_free(run_dir);

  int polls = 0;
  ds_sweep_summary s{};
  CHECK(ds_sweep(exp, 0, 0, 0, cancel_after_two, &polls, &s) == DS_CANCELLED);
  CHECK(s.cells == 3);
  CHECK(s.done == 2);
  CHECK(s.pending == 1);
  CHECK(ds_sweep(exp, 0, 0, 0, nullptr, nullptr, &s) == DS_ALREADY_EXISTS);
  REQUIRE(ds_sweep(exp, 1, 0, 0, nullptr, nullptr, &s) == DS_OK);
  CHECK(s.done == 3);
  CHECK(s.computed == 1);

  char* written = nullptr;
  REQUIRE(ds_report(out.c_str(), 1, 1, &written) == DS_OK);
  CHECK(fs::exists(fs::path(written) / "summary.md"));
  ds_string_free(written);
  CHECK_FALSE(log.lines.empty());

  ds_experiment_free(exp);
  fs::remove_all(out);
}
