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

// Acceptance gate: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset, e.g. `dopeseg_acceptance 1 2 3`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dopeseg/dataset.hpp"
#include "dopeseg/experiment.hpp"
#include "dopeseg/metrics.hpp"
#include "dopeseg/models.hpp"
#include "dopeseg/nn.hpp"
#include "dopeseg/phantom.hpp"
#include "dopeseg/sweep.hpp"
#include "dopeseg/training.hpp"
#include "oracles.hpp"
#include "reference_grid.hpp"

using namespace dopeseg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failed checks into one detail line.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) {
      pass_ = false;
      if (!failures_.empty()) failures_ += "; ";
      failures_ += what;
    }
  }
  Outcome done(const std::string& summary) const {
    return {pass_, pass_ ? summary : summary + " | failed: " + failures_};
  }

 private:
  bool pass_ = true;
  std::string failures_;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("dopeseg_acceptance_" + name);
  fs::remove_all(d);
  return d;
}

const Plane kPlanes[] = {Plane::kSagittal, Plane::kAxial, Plane::kCoronal};

// 1. Metrics against the set oracle.
Outcome metric_oracle() {
  const auto t0 = Clock::now();
  Checks c;
  std::size_t worst_pairs = 0;
  double worst = 0.0;
  auto compare = [&](const BinaryMask& a, const BinaryMask& b) {
    const auto want = oracle::set_scores(a.data, b.data);
    const auto got = metrics::compare(a, b);
    worst = std::max({worst, std::abs(got.iou - want.iou), std::abs(got.dsc - want.dsc),
                      std::abs(got.dsc - 2 * got.iou / (1 + got.iou))});
    ++worst_pairs;
  };
  for (int ma = 0; ma < 16; ++ma) {
    for (int mb = 0; mb < 16; ++mb) {
      BinaryMask a(2, 2);
      BinaryMask b(2, 2);
      for (int i = 0; i < 4; ++i) {
        a.data[i] = (ma >> i) & 1;
        b.data[i] = (mb >> i) & 1;
      }
      compare(a, b);
    }
  }
  std::mt19937_64 rng(2026);
  for (int k = 0; k < 1000; ++k) {
    BinaryMask a(8, 8);
    BinaryMask b(8, 8);
    std::bernoulli_distribution da((k % 11) / 10.0);
    std::bernoulli_distribution db(((k / 11) % 11) / 10.0);
    for (auto& v : a.data) v = da(rng);
    for (auto& v : b.data) v = db(rng);
    compare(a, b);
  }
  const double secs = seconds_since(t0);
  c.expect(worst_pairs == 1256, "pair count");
  c.expect(worst <= 1e-12, "max deviation " + sci(worst));
  c.expect(secs < 1.0, "runtime " + fmt(secs, 2) + " s");
  return c.done(std::to_string(worst_pairs) + " pairs, max deviation " + sci(worst) +
                ", " + fmt(secs, 3) + " s");
}

// 2. Decision logic on the published U-Net grid.
Outcome criterion_reproduction() {
  const auto t0 = Clock::now();
  Checks c;
  const auto g = reference::unet_iou_grid();
  auto crit = [&](sweep::Ratio r, Plane p) {
    return sweep::doping_criterion(g.at({0, 1}).at(p), g.at(r).at(p), 0.05);
  };
  for (int n = 1; n <= 7; ++n) {
    for (Plane p : kPlanes) {
      c.expect(crit({n, 10 - n}, p).pass,
               sweep::Ratio{n, 10 - n}.label() + " " + std::string(to_string(p)) + " fails");
    }
  }
  bool any82 = false;
  bool any91 = false;
  for (Plane p : kPlanes) {
    any82 |= !crit({8, 2}, p).pass;
    any91 |= !crit({9, 1}, p).pass;
  }
  c.expect(any82, "08:02 passes everywhere");
  c.expect(any91, "09:01 passes everywhere");
  const double m_sag = crit({7, 3}, Plane::kSagittal).margin;
  const double m_ax = crit({7, 3}, Plane::kAxial).margin;
  const double m_cor = crit({7, 3}, Plane::kCoronal).margin;
  const double m82 = crit({8, 2}, Plane::kSagittal).margin;
  // Published margins are given to four decimals.
  auto near = [](double v, double want) { return std::abs(v - want) < 5e-5; };
  c.expect(near(m_sag, 0.0403), "sagittal 07:03 margin " + fmt(m_sag));
  c.expect(near(m_ax, 0.0129), "axial 07:03 margin " + fmt(m_ax));
  c.expect(near(m_cor, 0.0160), "coronal 07:03 margin " + fmt(m_cor));
  c.expect(near(m82, 0.0615) && m82 > 0.05, "sagittal 08:02 margin " + fmt(m82));
  const auto best = sweep::optimal_ratio(g, kPlanes, 0.05);
  c.expect(best && *best == sweep::Ratio{7, 3}, "optimal ratio");
  const double secs = seconds_since(t0);
  c.expect(secs < 1.0, "runtime");
  return c.done("07:03 margins " + fmt(m_sag) + "/" + fmt(m_ax) + "/" + fmt(m_cor) +
                ", 08:02 sagittal " + fmt(m82) + ", optimal " +
                (best ? best->label() : std::string("none")) + ", " + fmt(secs, 3) + " s");
}

std::vector<dataset::SliceSample> slice_pool(Domain d, int patients, int per_patient) {
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

// 3. Assortment counts, fraction error and manifest determinism.
Outcome assortment_exactness() {
  const auto t0 = Clock::now();
  Checks c;
  const auto na = slice_pool(Domain::kNA, 20, 64);
  const auto wa = slice_pool(Domain::kWA, 20, 64);
  const auto m = dataset::assort(na, wa, {7, 3, 1000, 0});
  c.expect(m.na_count == 700 && m.wa_count == 300,
           "7:3 of 1000 gave " + std::to_string(m.na_count) + "+" + std::to_string(m.wa_count));
  double worst = 0.0;
  for (int total : {10, 99, 200, 1000}) {
    for (const auto& r : sweep::default_ratios()) {
      const auto man = dataset::assort(na, wa, {r.na, r.wa, total, 0});
      const double err = std::abs(static_cast<double>(man.na_count) / total - r.na_fraction());
      worst = std::max(worst, err * total);
      c.expect(err < 1.0 / total, r.label() + " of " + std::to_string(total));
    }
  }
  const auto a = dataset::assort(na, wa, {7, 3, 1000, 42}).to_csv();
  const auto b = dataset::assort(na, wa, {7, 3, 1000, 42}).to_csv();
  c.expect(a == b, "manifests differ for one seed");
  const double secs = seconds_since(t0);
  c.expect(secs < 1.0, "runtime");
  return c.done("700+300, worst fraction error " + fmt(worst, 3) + "/total, manifests identical, " +
                fmt(secs, 3) + " s");
}

// 4. Shapes, ranges, Half-UNet size and overfit-one-batch descent.
Outcome architecture_contracts() {
  const auto t0 = Clock::now();
  Checks c;
  nn::Tensor x({2, 1, 128, 128});
  nn::Tensor y({2, 1, 128, 128});
  std::mt19937_64 rng(4);
  std::normal_distribution<float> noise(0.0f, 0.05f);
  for (int n = 0; n < 2; ++n) {
    const double r = 20 + 12 * n;
    for (int i = 0; i < 128; ++i) {
      for (int j = 0; j < 128; ++j) {
        const bool in = (i - 64) * (i - 64) + (j - 60) * (j - 60) <= r * r;
        const std::size_t k = (static_cast<std::size_t>(n) * 128 + i) * 128 + j;
        y.data[k] = in;
        x.data[k] = std::clamp((in ? 0.7f : 0.3f) + noise(rng), 0.0f, 1.0f);
      }
    }
  }
  std::string detail;
  std::size_t unet_params = 0;
  std::size_t half_params = 0;
  for (auto a : models::all_architectures()) {
    const std::string name(models::to_string(a));
    models::ModelSpec spec;
    spec.architecture = a;
    auto m = models::Model::build(spec, 1);
    if (a == models::Architecture::kUnet) unet_params = m.parameter_count();
    if (a == models::Architecture::kHalfUnet) half_params = m.parameter_count();
    const auto out = m.forward(x);
    c.expect(out.shape.n == 2 && out.shape.c == 1 && out.shape.h == 128 && out.shape.w == 128,
             name + " output shape");
    bool in_range = true;
    for (float p : out.data) in_range &= p > 0.0f && p < 1.0f;
    c.expect(in_range, name + " probabilities outside (0,1)");
    training::TrainConfig tc;
    tc.batch_size = 2;
    tc.learning_rate = 1e-3;
    const auto losses = training::fit_batch(m, x, y, tc, 5);
    const bool descends = losses.size() == 5 && losses[4] < losses[0];
    c.expect(descends, name + " loss " + fmt(losses.front()) + " -> " + fmt(losses.back()));
    detail += name + " " + fmt(losses.front(), 3) + "->" + fmt(losses.back(), 3) + " ";
  }
  c.expect(half_params < unet_params, "Half-UNet not smaller");
  const double secs = seconds_since(t0);
  c.expect(secs < 300.0, "runtime " + fmt(secs, 1) + " s");
  return c.done(detail + "| params half " + std::to_string(half_params) + " < unet " +
                std::to_string(unet_params) + ", " + fmt(secs, 1) + " s");
}

// 5. Analytic dice gradient against central differences, and loss bounds.
Outcome dice_gradient() {
  const auto t0 = Clock::now();
  Checks c;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.02, 0.98);
  std::bernoulli_distribution coin(0.4);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    nn::Tensor p({1, 1, 4, 4});
    nn::Tensor t({1, 1, 4, 4});
    for (auto& v : p.data) v = static_cast<float>(u(rng));
    for (auto& v : t.data) v = coin(rng);
    auto probs = nn::parameter(p);
    nn::backward(nn::dice_loss(probs, t, 1.0f));
    std::vector<double> pd(p.data.begin(), p.data.end());
    const std::vector<double> td(t.data.begin(), t.data.end());
    for (std::size_t i = 0; i < pd.size(); ++i) {
      auto plus = pd;
      auto minus = pd;
      plus[i] += 1e-5;
      minus[i] -= 1e-5;
      const double fd =
          (oracle::dice_loss(plus, td, 1, 1.0) - oracle::dice_loss(minus, td, 1, 1.0)) / 2e-5;
      worst = std::max(worst, std::abs(probs->grad[i] - fd) / std::max(std::abs(fd), 1e-8));
    }
  }
  c.expect(worst < 1e-4, "relative error " + sci(worst));
  std::uniform_real_distribution<float> uf(0.0f, 1.0f);
  std::bernoulli_distribution sparse(0.2);
  int out_of_bounds = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    nn::Tensor p({2, 1, 4, 4});
    nn::Tensor t({2, 1, 4, 4});
    for (auto& v : p.data) v = trial % 5 == 0 ? std::round(uf(rng)) : uf(rng);
    for (auto& v : t.data) v = sparse(rng);
    const double l = training::dice_loss(p, t, trial % 2 ? 1.0 : 1e-6);
    out_of_bounds += l < 0.0 || l > 1.0;
  }
  c.expect(out_of_bounds == 0, std::to_string(out_of_bounds) + " losses outside [0,1]");
  return c.done("max relative error " + sci(worst) + ", 2000 losses in [0,1], " +
                fmt(seconds_since(t0), 3) + " s");
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// 6. Desk-scale direction of the doping effect.
Outcome desk_reproduction() {
  const auto t0 = Clock::now();
  Checks c;
  auto cfg = experiment::load_config(fs::path(DOPESEG_SOURCE_DIR) / "configs" / "desk.json");
  cfg.output_dir = scratch("desk");
  cfg.write_png = false;
  experiment::generate(cfg, true);
  const auto cohorts = experiment::load_cohorts(cfg);
  const auto data = experiment::prepare_data(cfg, cohorts);
  sweep::RunOptions ro;
  ro.cache_dir = cfg.output_dir / "cells";
  ro.data_hash = data.data_hash;
  ro.force = true;
  ro.log = [](const std::string& line) { std::fprintf(stderr, "  [6] %s\n", line.c_str()); };
  const auto result = sweep::run_sweep(cfg.sweep_config(), data.pools, ro);
  c.expect(result.failed() == 0, std::to_string(result.failed()) + " failed cells");

  auto med = [&](sweep::Ratio r) {
    std::vector<double> v;
    for (const auto& cell : result.cells) {
      if (cell.ratio == r && cell.status == sweep::CellStatus::kDone) v.push_back(cell.mean.iou);
    }
    return v.empty() ? 0.0 : median(v);
  };
  const double only_na = med({1, 0});
  const double doped = med({7, 3});
  const double only_wa = med({0, 1});
  c.expect(only_na + 0.05 < doped, "IoU(only-NA) + 0.05 >= IoU(7:3)");
  c.expect(doped <= only_wa + 0.03, "IoU(7:3) > IoU(only-WA) + 0.03");
  const double secs = seconds_since(t0);
  c.expect(secs < 900.0, "runtime " + fmt(secs, 0) + " s");
  fs::remove_all(cfg.output_dir);
  return c.done("median IoU only-NA " + fmt(only_na) + ", 7:3 " + fmt(doped) + ", only-WA " +
                fmt(only_wa) + " over " + std::to_string(cfg.sweep_seeds.size()) + " seeds, " +
                fmt(secs, 0) + " s");
}

// 7. Interrupt and resume a 6-cell sweep.
Outcome sweep_idempotence() {
  const auto t0 = Clock::now();
  Checks c;
  phantom::PhantomConfig pc;
  pc.grid_shape = {48, 48, 32};
  pc.bladder_radius_range = {8.0, 12.0};
  pc.bladder_center_jitter = 2.0;
  phantom::ApplicatorSpec app;
  app.axis_entry_point = {23.5, 37.0, 0.0};
  const auto na = phantom::generate_cohort(5, Domain::kNA, pc, std::nullopt);
  const auto wa = phantom::generate_cohort(5, Domain::kWA, pc, app);
  std::vector<std::string> na_ids;
  std::vector<std::string> wa_ids;
  for (const auto& v : na) na_ids.push_back(v.patient_id);
  for (const auto& v : wa) wa_ids.push_back(v.patient_id);
  const auto split = dataset::split_patients(na_ids, wa_ids, {}, 3);
  const auto pools =
      dataset::build_pools(na, wa, split, {Plane::kAxial, Plane::kCoronal}, 16, {}, 9);

  sweep::SweepConfig cfg;
  cfg.ratios = {{1, 0}, {7, 3}, {0, 1}};
  cfg.planes = {Plane::kAxial, Plane::kCoronal};
  models::ModelSpec m;
  m.depth = 2;
  m.base_width = 8;
  cfg.model_specs = {m};
  cfg.train_config.batch_size = 8;
  cfg.train_config.max_epochs = 2;
  cfg.train_config.early_stop_patience = 1;
  cfg.total_samples = 20;
  cfg.val_samples = 8;

  sweep::RunOptions ro;
  ro.cache_dir = scratch("resume");
  ro.data_hash = "acceptance";
  int polls = 0;
  ro.cancelled = [&] { return polls++ >= 3; };
  const auto first = sweep::run_sweep(cfg, pools, ro);
  std::size_t done_first = 0;
  for (const auto& cell : first.cells) done_first += cell.status == sweep::CellStatus::kDone;
  c.expect(first.cells.size() == 6, "grid has " + std::to_string(first.cells.size()) + " cells");
  c.expect(done_first == 3, "interrupted after " + std::to_string(done_first) + " cells");

  ro.cancelled = {};
  const auto second = sweep::run_sweep(cfg, pools, ro);
  std::size_t recomputed = 0;
  std::set<std::string> hashes;
  for (std::size_t i = 0; i < second.cells.size(); ++i) {
    const auto& cell = second.cells[i];
    c.expect(cell.status == sweep::CellStatus::kDone, "cell " + cell.key + " not done");
    if (first.cells[i].status == sweep::CellStatus::kDone) {
      recomputed += !cell.from_cache;
      c.expect(cell.mean.iou == first.cells[i].mean.iou, "cached value changed");
    }
    hashes.insert(cell.test_manifest_hash);
  }
  c.expect(recomputed == 0, std::to_string(recomputed) + " finished cells recomputed");
  c.expect(second.computed() == 6 - done_first, "resume computed " +
                                                    std::to_string(second.computed()));
  c.expect(hashes.size() == 1 && *hashes.begin() == pools.test_manifest.hash(),
           std::to_string(hashes.size()) + " test manifest hashes");
  fs::remove_all(ro.cache_dir);
  return c.done(std::to_string(done_first) + " cells before interrupt, " +
                std::to_string(recomputed) + " recomputed on resume, " +
                std::to_string(second.computed()) + " newly computed, " +
                std::to_string(hashes.size()) + " test manifest hash, " +
                fmt(seconds_since(t0), 1) + " s");
}

// 8. Phantom ground truth and generation speed.
Outcome phantom_ground_truth() {
  Checks c;
  phantom::PhantomConfig cfg;
  phantom::ApplicatorSpec app;
  const auto t0 = Clock::now();
  const auto na = phantom::generate_cohort(50, Domain::kNA, cfg, std::nullopt);
  const auto wa = phantom::generate_cohort(50, Domain::kWA, cfg, app);
  const double gen_secs = seconds_since(t0);
  c.expect(gen_secs < 60.0, "100 patients took " + fmt(gen_secs, 1) + " s");

  phantom::PhantomConfig quiet = cfg;
  quiet.noise_sigma = 0.0;
  std::size_t mismatches = 0;
  for (int i = 0; i < 10; ++i) {
    const auto v = phantom::generate_patient(quiet, "NA_" + std::to_string(100 + i));
    const auto& b = v.bladder;
    for (int z = 0; z < v.mask.nz; ++z) {
      for (int y = 0; y < v.mask.ny; ++y) {
        for (int x = 0; x < v.mask.nx; ++x) {
          const std::array<double, 3> p{x * v.spacing[0], y * v.spacing[1], z * v.spacing[2]};
          mismatches += oracle::in_ellipsoid(p, b.center, b.semi_axes, b.yaw) !=
                        (v.mask.at(x, y, z) != 0);
        }
      }
    }
  }
  c.expect(mismatches == 0, std::to_string(mismatches) + " voxels differ from the ellipsoid");

  const std::array<double, 3> origin{app.axis_entry_point[0] * cfg.voxel_spacing[0],
                                     app.axis_entry_point[1] * cfg.voxel_spacing[1],
                                     app.axis_entry_point[2] * cfg.voxel_spacing[2]};
  int multi = 0;
  std::size_t in_cylinder = 0;
  for (const auto& v : wa) {
    multi += phantom::count_components(v.mask) != 1;
    for (int z = 0; z < v.mask.nz; ++z) {
      for (int y = 0; y < v.mask.ny; ++y) {
        for (int x = 0; x < v.mask.nx; ++x) {
          if (!v.mask.at(x, y, z)) continue;
          const std::array<double, 3> p{x * cfg.voxel_spacing[0], y * cfg.voxel_spacing[1],
                                        z * cfg.voxel_spacing[2]};
          in_cylinder += oracle::line_distance(p, origin, app.axis_direction) <= app.radius;
        }
      }
    }
  }
  c.expect(multi == 0, std::to_string(multi) + " WA masks not one component");
  c.expect(in_cylinder == 0, std::to_string(in_cylinder) + " WA voxels inside the applicator");
  return c.done("10 noiseless NA masks exact, 50 WA masks single-component with 0 cylinder "
                "voxels, 100 patients in " + fmt(gen_secs, 1) + " s");
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "metric oracle equivalence", metric_oracle},
      {2, "criterion on the published grid", criterion_reproduction},
      {3, "assortment exactness", assortment_exactness},
      {4, "architecture contracts", architecture_contracts},
      {5, "dice loss gradient", dice_gradient},
      {6, "desk-scale doping effect", desk_reproduction},
      {7, "sweep idempotence", sweep_idempotence},
      {8, "phantom ground truth", phantom_ground_truth},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& cr : all) {
    if (!wanted.empty() && !wanted.count(cr.id)) continue;
    Outcome o;
    try {
      o = cr.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %d %s  %s: %s\n", cr.id, o.pass ? "PASS" : "FAIL", cr.name,
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
