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

#include "dopeseg/dopeseg.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "dopeseg/experiment.hpp"
#include "dopeseg/metrics.hpp"
#include "dopeseg/models.hpp"

struct ds_experiment {
  dopeseg::experiment::ExperimentConfig config;
  ds_log_fn log_fn = nullptr;
  void* log_user = nullptr;

  dopeseg::experiment::Logger logger() const {
    if (!log_fn) return {};
    return [fn = log_fn, user = log_user](const std::string& line) { fn(line.c_str(), user); };
  }
};

struct ds_model {
  dopeseg::models::Model model;
};

namespace {

using dopeseg::Error;
using dopeseg::ErrorCode;

thread_local std::string g_last_error;

ds_status status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return DS_INVALID_ARGUMENT;
    case ErrorCode::kValidation: return DS_VALIDATION;
    case ErrorCode::kShape: return DS_SHAPE;
    case ErrorCode::kIo: return DS_IO;
    case ErrorCode::kNumeric: return DS_NUMERIC;
    case ErrorCode::kNotFound: return DS_NOT_FOUND;
    case ErrorCode::kAlreadyExists: return DS_ALREADY_EXISTS;
    case ErrorCode::kPartialFailure: return DS_PARTIAL_FAILURE;
    case ErrorCode::kInternal: return DS_INTERNAL;
  }
  return DS_INTERNAL;
}

ds_status set_error(ds_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

// Runs f, translating every exception into a status and message.
template <class F>
ds_status guard(F&& f) {
  g_last_error.clear();
  try {
    return f();
  } catch (const Error& e) {
    return set_error(status_of(e.code()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return set_error(DS_VALIDATION, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return set_error(DS_IO, e.what());
  } catch (const std::bad_alloc&) {
    return set_error(DS_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(DS_INTERNAL, e.what());
  } catch (...) {
    return set_error(DS_INTERNAL, "unknown error");
  }
}

#define DS_REQUIRE(cond, what) \
  if (!(cond)) return set_error(DS_INVALID_ARGUMENT, what)

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

ds_status revalidate(ds_experiment* exp) {
  exp->config.validate();
  return DS_OK;
}

}  // namespace

extern "C" {

const char* ds_version(void) { return "0.1.0"; }

const char* ds_last_error(void) { return g_last_error.c_str(); }

const char* ds_status_name(ds_status status) {
  switch (status) {
    case DS_OK: return "ok";
    case DS_INVALID_ARGUMENT: return "invalid argument";
    case DS_VALIDATION: return "validation error";
    case DS_SHAPE: return "shape error";
    case DS_IO: return "i/o error";
    case DS_NUMERIC: return "numeric error";
    case DS_NOT_FOUND: return "not found";
    case DS_ALREADY_EXISTS: return "already exists";
    case DS_PARTIAL_FAILURE: return "partial failure";
    case DS_CANCELLED: return "cancelled";
    case DS_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void ds_string_free(char* s) { std::free(s); }

ds_status ds_experiment_load(const char* config_path, ds_experiment** out) {
  DS_REQUIRE(config_path && out, "config_path and out must not be null");
  *out = nullptr;
  return guard([&] {
    auto exp = std::make_unique<ds_experiment>();
    exp->config = dopeseg::experiment::load_config(config_path);
    *out = exp.release();
    return DS_OK;
  });
}

ds_status ds_experiment_from_json(const char* json, ds_experiment** out) {
  DS_REQUIRE(json && out, "json and out must not be null");
  *out = nullptr;
  return guard([&] {
    auto exp = std::make_unique<ds_experiment>();
    exp->config = dopeseg::experiment::config_from_json(nlohmann::json::parse(json));
    *out = exp.release();
    return DS_OK;
  });
}

void ds_experiment_free(ds_experiment* exp) { delete exp; }

ds_status ds_experiment_set_output_dir(ds_experiment* exp, const char* dir) {
  DS_REQUIRE(exp && dir, "exp and dir must not be null");
  return guard([&] {
    exp->config.output_dir = dir;
    return revalidate(exp);
  });
}

ds_status ds_experiment_set_seed(ds_experiment* exp, uint64_t seed) {
  DS_REQUIRE(exp, "exp must not be null");
  return guard([&] {
    // The phantom seed follows the top-level seed unless it was pinned
    // separately in the config.
    if (exp->config.phantom.seed == exp->config.seed) exp->config.phantom.seed = seed;
    exp->config.seed = seed;
    return revalidate(exp);
  });
}

ds_status ds_experiment_set_log(ds_experiment* exp, ds_log_fn fn, void* user) {
  DS_REQUIRE(exp, "exp must not be null");
  exp->log_fn = fn;
  exp->log_user = user;
  return DS_OK;
}

ds_status ds_experiment_resolved_json(const ds_experiment* exp, char** out) {
  DS_REQUIRE(exp && out, "exp and out must not be null");
  return guard([&] {
    *out = dup_string(dopeseg::experiment::to_json(exp->config).dump(2));
    return DS_OK;
  });
}

ds_status ds_experiment_content_hash(const ds_experiment* exp, char** out) {
  DS_REQUIRE(exp && out, "exp and out must not be null");
  return guard([&] {
    *out = dup_string(dopeseg::experiment::content_hash(exp->config));
    return DS_OK;
  });
}

ds_status ds_generate(ds_experiment* exp, int force) {
  DS_REQUIRE(exp, "exp must not be null");
  return guard([&] {
    dopeseg::experiment::generate(exp->config, force != 0, exp->logger());
    return DS_OK;
  });
}

ds_status ds_train(ds_experiment* exp, const char* ratio, const char* plane,
                   const char* architecture, ds_train_result* result, char** run_dir) {
  DS_REQUIRE(exp && ratio && plane && architecture, "exp, ratio, plane and architecture are required");
  if (run_dir) *run_dir = nullptr;
  return guard([&] {
    const auto outcome = dopeseg::experiment::train(
        exp->config, dopeseg::sweep::parse_ratio(ratio), dopeseg::parse_plane(plane),
        dopeseg::models::parse_architecture(architecture), exp->logger());
    if (result) {
      result->test_iou = outcome.test.iou;
      result->test_dsc = outcome.test.dsc;
      result->test_slices = outcome.test_slices;
      result->best_epoch = outcome.history.best_epoch;
      result->stopped_epoch = outcome.history.stopped_epoch;
    }
    if (run_dir) *run_dir = dup_string(outcome.run_dir.string());
    return DS_OK;
  });
}

ds_status ds_sweep(ds_experiment* exp, int resume, int force, int workers, ds_cancel_fn cancel,
                   void* cancel_user, ds_sweep_summary* summary) {
  DS_REQUIRE(exp, "exp must not be null");
  return guard([&] {
    dopeseg::experiment::SweepOptions opts;
    opts.resume = resume != 0;
    opts.force = force != 0;
    if (workers > 0) opts.workers = workers;
    if (cancel) opts.cancelled = [cancel, cancel_user] { return cancel(cancel_user) != 0; };
    const auto result = dopeseg::experiment::run_sweep(exp->config, opts, exp->logger());
    ds_sweep_summary s{};
    s.cells = result.cells.size();
    for (const auto& c : result.cells) {
      s.done += c.status == dopeseg::sweep::CellStatus::kDone;
      s.pending += c.status == dopeseg::sweep::CellStatus::kPending;
    }
    s.failed = result.failed();
    s.computed = result.computed();
    if (summary) *summary = s;
    if (s.pending > 0) {
      return set_error(DS_CANCELLED, std::to_string(s.pending) + " of " +
                                         std::to_string(s.cells) +
                                         " cells were not run; rerun with --resume");
    }
    if (s.failed > 0) {
      return set_error(DS_PARTIAL_FAILURE, std::to_string(s.failed) + " of " +
                                               std::to_string(s.cells) +
                                               " cells failed; see errors.md");
    }
    return DS_OK;
  });
}

ds_status ds_report(const char* results_dir, int csv, int markdown, char** written_dir) {
  DS_REQUIRE(results_dir, "results_dir must not be null");
  DS_REQUIRE(csv || markdown, "at least one of csv and markdown must be requested");
  if (written_dir) *written_dir = nullptr;
  return guard([&] {
    const auto dir = dopeseg::experiment::report(results_dir, csv != 0, markdown != 0);
    if (written_dir) *written_dir = dup_string(dir.string());
    return DS_OK;
  });
}

ds_status ds_iou(const uint8_t* a, const uint8_t* b, size_t n, double* out) {
  DS_REQUIRE((a && b) || n == 0, "masks must not be null");
  DS_REQUIRE(out, "out must not be null");
  return guard([&] {
    *out = dopeseg::metrics::iou(std::span(a, n), std::span(b, n));
    return DS_OK;
  });
}

ds_status ds_dsc(const uint8_t* a, const uint8_t* b, size_t n, double* out) {
  DS_REQUIRE((a && b) || n == 0, "masks must not be null");
  DS_REQUIRE(out, "out must not be null");
  return guard([&] {
    *out = dopeseg::metrics::dsc(std::span(a, n), std::span(b, n));
    return DS_OK;
  });
}

ds_status ds_doping_criterion(double iou_wa, double iou_doped, double epsilon, int* pass,
                              double* margin) {
  return guard([&] {
    const auto r = dopeseg::sweep::doping_criterion(iou_wa, iou_doped, epsilon);
    if (pass) *pass = r.pass ? 1 : 0;
    if (margin) *margin = r.margin;
    return DS_OK;
  });
}

ds_status ds_model_create(const char* spec_json, uint64_t seed, ds_model** out) {
  DS_REQUIRE(spec_json && out, "spec_json and out must not be null");
  *out = nullptr;
  return guard([&] {
    const auto spec = dopeseg::models::model_spec_from_json(nlohmann::json::parse(spec_json));
    *out = new ds_model{dopeseg::models::Model::build(spec, seed)};
    return DS_OK;
  });
}

ds_status ds_model_load(const char* checkpoint_path, ds_model** out) {
  DS_REQUIRE(checkpoint_path && out, "checkpoint_path and out must not be null");
  *out = nullptr;
  return guard([&] {
    *out = new ds_model{dopeseg::models::load_checkpoint(checkpoint_path)};
    return DS_OK;
  });
}

ds_status ds_model_save(const ds_model* model, const char* checkpoint_path) {
  DS_REQUIRE(model && checkpoint_path, "model and checkpoint_path must not be null");
  return guard([&] {
    dopeseg::models::save_checkpoint(model->model, checkpoint_path);
    return DS_OK;
  });
}

void ds_model_free(ds_model* model) { delete model; }

ds_status ds_model_param_count(const ds_model* model, size_t* out) {
  DS_REQUIRE(model && out, "model and out must not be null");
  *out = model->model.parameter_count();
  return DS_OK;
}

ds_status ds_model_forward(ds_model* model, const float* images, int n, int h, int w,
                           float* probs) {
  DS_REQUIRE(model && images && probs, "model, images and probs must not be null");
  DS_REQUIRE(n > 0 && h > 0 && w > 0, "n, h and w must be positive");
  return guard([&] {
    model->model.spec().check_input(h, w);
    dopeseg::nn::Tensor batch(dopeseg::nn::Shape{n, 1, h, w});
    std::memcpy(batch.data.data(), images, batch.data.size() * sizeof(float));
    const auto out = model->model.forward(batch);
    std::memcpy(probs, out.data.data(), out.data.size() * sizeof(float));
    return DS_OK;
  });
}

}  // extern "C"
