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

// Runs the installed command line tool as a subprocess.

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string output;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(DOPESEG_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[512];
  while (std::fgets(buf, sizeof buf, pipe)) out += buf;
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

fs::path write_config(const fs::path& dir, const nlohmann::json& j) {
  fs::create_directories(dir);
  const auto path = dir / "config.json";
  std::ofstream(path) << j.dump(2);
  return path;
}

nlohmann::json tiny(const fs::path& out) {
  return {{"output_dir", (out / "run").string()},
          {"seed", 5},
          {"phantom",
           {{"grid_shape", {48, 48, 32}},
            {"bladder_radius_range", {8.0, 12.0}},
            {"bladder_center_jitter", 2.0},
            {"n_na", 5},
            {"n_wa", 5},
            {"applicator", {{"axis_entry_point", {23.5, 37.0, 0.0}}}}}},
          {"dataset",
           {{"planes", {"axial"}},
            {"target_size", 16},
            {"assortment", {{"ratio", "7:3"}, {"total", 20}}},
            {"val_total", 8}}},
          {"models", {{{"architecture", "unet"}, {"depth", 2}, {"base_width", 8}}}},
          {"training", {{"batch_size", 8}, {"max_epochs", 2}, {"early_stop_patience", 1}}},
          {"sweep", {{"ratios", {"1:0", "7:3", "0:1"}}}}};
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(run("").code == 1);
  CHECK(run("frobnicate").code == 1);
  CHECK(run("report --format pdf .").code == 1);
  CHECK(run("--help").code == 0);
}

TEST_CASE("invalid configs exit with 1 and name the field") {
  const auto dir = fs::temp_directory_path() / "dopeseg_test_cli_bad";
  fs::remove_all(dir);
  auto j = tiny(dir);
  j["training"]["batch_size"] = -3;
  const auto r = run("generate " + write_config(dir, j).string());
  CHECK(r.code == 1);
  CHECK(r.output.find("training.batch_size") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("generate, train, sweep, report") {
  const auto dir = fs::temp_directory_path() / "dopeseg_test_cli";
  fs::remove_all(dir);
  const auto cfg = write_config(dir, tiny(dir)).string();
  const auto out = dir / "run";

  auto r = run("generate " + cfg);
  CHECK(r.code == 0);
  CHECK(r.output.find("5 NA and 5 WA") != std::string::npos);
  CHECK(fs::exists(out / "dataset" / "slices" / "axial"));
  CHECK(run("generate " + cfg).code == 1);
  CHECK(run("generate " + cfg + " --force").code == 0);

  // --out and --seed override the file.
  const auto alt = dir / "alt";
  CHECK(run("generate " + cfg + " --out " + alt.string() + " --seed 9").code == 0);
  std::ifstream resolved(alt / "config.resolved.json");
  const auto rj = nlohmann::json::parse(resolved);
  CHECK(rj.at("config").at("seed") == 9);
  CHECK(rj.contains("content_hash"));

  r = run("train " + cfg + " --ratio 7:3 --plane axial --model unet");
  CHECK(r.code == 0);
  CHECK(r.output.find("test IoU") != std::string::npos);
  CHECK(fs::exists(out / "train" / "unet_axial_7-3" / "history.csv"));
  CHECK(run("train " + cfg + " --ratio 1:0 --plane axial").code == 0);
  r = run("train " + cfg + " --ratio 0:0 --plane axial");
  CHECK(r.code == 1);
  CHECK(r.output.find("0:0") != std::string::npos);
  CHECK(run("train " + cfg + " --ratio 7:3 --plane oblique").code == 1);

  r = run("sweep " + cfg);
  CHECK(r.code == 0);
  CHECK(r.output.find("3 done (3 computed") != std::string::npos);
  CHECK(run("sweep " + cfg).code == 1);
  r = run("sweep " + cfg + " --resume");
  CHECK(r.code == 0);
  CHECK(r.output.find("0 computed, 3 cached") != std::string::npos);

  fs::remove(out / "sweep" / "results.csv");
  fs::remove(out / "sweep" / "summary.md");
  CHECK(run("report " + out.string() + " --format csv").code == 0);
  CHECK(fs::exists(out / "sweep" / "results.csv"));
  CHECK_FALSE(fs::exists(out / "sweep" / "summary.md"));
  CHECK(run("report " + (out / "sweep").string() + " --format md").code == 0);
  CHECK(fs::exists(out / "sweep" / "summary.md"));
  CHECK(run("report " + dir.string()).code == 1);
  fs::remove_all(dir);
}

TEST_CASE("a sweep with failed cells exits with 2") {
  const auto dir = fs::temp_directory_path() / "dopeseg_test_cli_partial";
  fs::remove_all(dir);
  auto j = tiny(dir);
  // The WA training pool holds fewer than 30 slices; the NA pool does not.
  j["dataset"]["assortment"]["total"] = 30;
  j["sweep"]["ratios"] = {"1:0", "0:1"};
  const auto cfg = write_config(dir, j).string();
  REQUIRE(run("generate " + cfg).code == 0);
  const auto r = run("sweep " + cfg);
  CHECK(r.code == 2);
  CHECK(r.output.find("1 failed") != std::string::npos);
  CHECK(fs::exists(dir / "run" / "sweep" / "errors.md"));
  fs::remove_all(dir);
}
