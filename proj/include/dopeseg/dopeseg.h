/* Copyright 2026 The DopeSeg Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to libdopeseg.
 *
 * Every function returns a ds_status. On failure the message is available
 * from ds_last_error() on the same thread until the next call. Handles are
 * opaque and must be released with their matching _free function. Strings
 * handed out by the library are owned by the library unless a function
 * says otherwise; free those with ds_string_free.
 */

#ifndef DOPESEG_DOPESEG_H_
#define DOPESEG_DOPESEG_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(DOPESEG_BUILDING_LIBRARY)
#define DS_API __declspec(dllexport)
#else
#define DS_API __declspec(dllimport)
#endif
#else
#define DS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ds_status {
  DS_OK = 0,
  DS_INVALID_ARGUMENT = 1,
  DS_VALIDATION = 2,
  DS_SHAPE = 3,
  DS_IO = 4,
  DS_NUMERIC = 5,
  DS_NOT_FOUND = 6,
  DS_ALREADY_EXISTS = 7,
  DS_PARTIAL_FAILURE = 8, /* sweep finished with failed cells */
  DS_CANCELLED = 9,       /* sweep stopped early; finished cells are cached */
  DS_INTERNAL = 10,
} ds_status;

typedef struct ds_experiment ds_experiment;
typedef struct ds_model ds_model;

/* Progress lines. `user` is passed through unchanged. */
typedef void (*ds_log_fn)(const char* line, void* user);
/* Polled between sweep cells; nonzero stops the sweep. */
typedef int (*ds_cancel_fn)(void* user);

DS_API const char* ds_version(void);
DS_API const char* ds_last_error(void);
DS_API const char* ds_status_name(ds_status status);
DS_API void ds_string_free(char* s);

/* ---- experiments ---- */

DS_API ds_status ds_experiment_load(const char* config_path, ds_experiment** out);
DS_API ds_status ds_experiment_from_json(const char* json, ds_experiment** out);
DS_API void ds_experiment_free(ds_experiment* exp);

/* Overrides applied after loading; each revalidates the config. */
DS_API ds_status ds_experiment_set_output_dir(ds_experiment* exp, const char* dir);
DS_API ds_status ds_experiment_set_seed(ds_experiment* exp, uint64_t seed);
DS_API ds_status ds_experiment_set_log(ds_experiment* exp, ds_log_fn fn, void* user);

/* Resolved config as JSON, caller frees with ds_string_free. */
DS_API ds_status ds_experiment_resolved_json(const ds_experiment* exp, char** out);
DS_API ds_status ds_experiment_content_hash(const ds_experiment* exp, char** out);

DS_API ds_status ds_generate(ds_experiment* exp, int force);

typedef struct ds_train_result {
  double test_iou;
  double test_dsc;
  size_t test_slices;
  int best_epoch;
  int stopped_epoch;
} ds_train_result;

/* ratio "7:3" or "Only WA"; plane "axial" etc.; architecture "unet" etc.
 * `run_dir`, when not null, receives the output directory (free it). */
DS_API ds_status ds_train(ds_experiment* exp, const char* ratio, const char* plane,
                          const char* architecture, ds_train_result* result, char** run_dir);

typedef struct ds_sweep_summary {
  size_t cells;
  size_t done;
  size_t failed;
  size_t pending;
  size_t computed; /* done in this call rather than loaded from the cache */
} ds_sweep_summary;

/* workers <= 0 keeps the configured value. */
DS_API ds_status ds_sweep(ds_experiment* exp, int resume, int force, int workers,
                          ds_cancel_fn cancel, void* cancel_user, ds_sweep_summary* summary);

/* Writes results.csv and/or summary.md from a finished sweep directory.
 * `written_dir`, when not null, receives the directory (free it). */
DS_API ds_status ds_report(const char* results_dir, int csv, int markdown, char** written_dir);

/* ---- metrics ---- */

/* Masks are row-major bytes, nonzero is foreground. Two empty masks score 1. */
DS_API ds_status ds_iou(const uint8_t* a, const uint8_t* b, size_t n, double* out);
DS_API ds_status ds_dsc(const uint8_t* a, const uint8_t* b, size_t n, double* out);

/* margin = (iou_wa - iou_doped) / iou_wa; pass when margin <= epsilon. */
DS_API ds_status ds_doping_criterion(double iou_wa, double iou_doped, double epsilon,
                                     int* pass, double* margin);

/* ---- models ---- */

/* spec_json is a model object such as {"architecture":"unet","depth":3}. */
DS_API ds_status ds_model_create(const char* spec_json, uint64_t seed, ds_model** out);
DS_API ds_status ds_model_load(const char* checkpoint_path, ds_model** out);
DS_API ds_status ds_model_save(const ds_model* model, const char* checkpoint_path);
DS_API void ds_model_free(ds_model* model);
DS_API ds_status ds_model_param_count(const ds_model* model, size_t* out);
/* Inference on a batch of n single-channel h x w images; `probs` holds
 * n*h*w floats. */
DS_API ds_status ds_model_forward(ds_model* model, const float* images, int n, int h, int w,
                                  float* probs);

#ifdef __cplusplus
}
#endif

#endif /* DOPESEG_DOPESEG_H_ */
