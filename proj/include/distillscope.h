// Copyright 2026 The DistillScope Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DISTILLSCOPE_H
#define DISTILLSCOPE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DS_API __declspec(dllexport)
#else
#define DS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ds_status {
  DS_OK = 0,
  DS_ERR_INVALID_ARGUMENT = 1, /* null handle, bad enum string, bad index */
  DS_ERR_CONFIG = 2,           /* rejected configuration value or key */
  DS_ERR_IO = 3,               /* unreadable or unwritable file */
  DS_ERR_CHECKPOINT = 4,       /* malformed checkpoint; see ds_checkpoint_failure */
  DS_ERR_NUMERIC = 5,          /* non-finite loss, gradient or singular solve */
  DS_ERR_SHAPE = 6,            /* tensor or input shape mismatch */
  DS_ERR_INTERNAL = 7          /* violated internal contract */
} ds_status;

typedef enum ds_checkpoint_failure {
  DS_CKPT_NONE = 0,
  DS_CKPT_BAD_MAGIC = 1,
  DS_CKPT_VERSION_MISMATCH = 2,
  DS_CKPT_TRUNCATED = 3,
  DS_CKPT_MANIFEST_MISMATCH = 4,
  DS_CKPT_MALFORMED_HEADER = 5
} ds_checkpoint_failure;

/* A run session: configuration, overrides and the last error message. */
typedef struct ds_session ds_session;
/* A model loaded from a checkpoint. */
typedef struct ds_model ds_model;

DS_API const char* ds_version(void);
DS_API const char* ds_status_name(ds_status status);

DS_API ds_status ds_session_create(ds_session** out);
DS_API void ds_session_destroy(ds_session* session);
/* Message of the last failed call on this session, or "" after a success. */
DS_API const char* ds_session_last_error(const ds_session* session);
DS_API ds_checkpoint_failure ds_session_checkpoint_failure(const ds_session* session);

/* Replaces the configuration with the JSON file at `path`. */
DS_API ds_status ds_session_load_config(ds_session* session, const char* path);
/* Replaces the configuration with a JSON document. */
DS_API ds_status ds_session_parse_config(ds_session* session, const char* json_text);
/* Seed precedence: this override, then DISTILLSCOPE_SEED, then the config. */
DS_API ds_status ds_session_set_seed(ds_session* session, uint64_t seed);
DS_API ds_status ds_session_set_threads(ds_session* session, int threads);
DS_API ds_status ds_session_set_out(ds_session* session, const char* dir);
/* Routes per-epoch progress lines to `fn`; null disables them. */
typedef void (*ds_progress_fn)(const char* line, void* user);
DS_API ds_status ds_session_set_progress(ds_session* session, ds_progress_fn fn, void* user);
/* Effective configuration (overrides and seed applied) as JSON. The string
   stays valid until the next call on the session. */
DS_API const char* ds_session_config_json(ds_session* session);

/* Pipeline stages. Every result is written under the output directory. */
DS_API ds_status ds_make_synthetic(ds_session* session);
DS_API ds_status ds_train_teacher(ds_session* session);
DS_API ds_status ds_distill_student(ds_session* session, const char* teacher_checkpoint);
/* `split` is "train", "val", "test" or null for the default split. */
DS_API ds_status ds_evaluate_checkpoint(ds_session* session, const char* checkpoint, const char* split);
DS_API ds_status ds_evaluate_confusion(ds_session* session, const char* confusion_csv);
/* `method` is gradcam, gradcampp, scorecam or lime. `image_ppm` may be null
   to explain sample `index` of the default split; class_index -1 explains
   the predicted class. */
DS_API ds_status ds_explain(ds_session* session, const char* checkpoint, const char* method, int index,
                            int class_index, const char* image_ppm);
/* Writes gradcheck.json; `max_rel_error` (nullable) receives the worst row. */
DS_API ds_status ds_gradcheck(ds_session* session, double* max_rel_error);

/* Models. Errors are reported on `session`. */
DS_API ds_status ds_model_load(ds_session* session, const char* checkpoint, ds_model** out);
DS_API void ds_model_destroy(ds_model* model);
DS_API int ds_model_num_classes(const ds_model* model);
DS_API int ds_model_image_size(const ds_model* model);
/* `chw` holds 3 * S * S normalized floats; `logits` receives num_classes. */
DS_API ds_status ds_model_predict(ds_session* session, const ds_model* model, const float* chw, size_t chw_len,
                                  float* logits, size_t logits_len);

#ifdef __cplusplus
}
#endif

#endif
