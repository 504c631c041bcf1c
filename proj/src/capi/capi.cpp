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

#include "distillscope.h"

#include <cstdlib>
#include <exception>
#include <memory>
#include <new>
#include <optional>
#include <string>

#include "app/pipeline.hpp"
#include "core/error.hpp"

struct ds_session {
  ds::RunConfig config;
  std::optional<std::uint64_t> seed_override;
  std::optional<int> threads_override;
  std::optional<std::string> out_override;
  ds_progress_fn progress = nullptr;
  void* progress_user = nullptr;
  std::string last_error;
  ds_checkpoint_failure checkpoint_failure = DS_CKPT_NONE;
  std::string config_text;
};

struct ds_model {
  ds::LoadedCheckpoint checkpoint;
};

namespace {

ds_checkpoint_failure map_failure(ds::CheckpointFailure f) {
  switch (f) {
    case ds::CheckpointFailure::kBadMagic: return DS_CKPT_BAD_MAGIC;
    case ds::CheckpointFailure::kVersionMismatch: return DS_CKPT_VERSION_MISMATCH;
    case ds::CheckpointFailure::kTruncated: return DS_CKPT_TRUNCATED;
    case ds::CheckpointFailure::kManifestMismatch: return DS_CKPT_MANIFEST_MISMATCH;
    case ds::CheckpointFailure::kMalformedHeader: return DS_CKPT_MALFORMED_HEADER;
  }
  return DS_CKPT_NONE;
}

// Runs `fn`, translating exceptions into a status and the session's message.
template <typename Fn>
ds_status guarded(ds_session* s, Fn&& fn) {
  if (s == nullptr) return DS_ERR_INVALID_ARGUMENT;
  s->last_error.clear();
  s->checkpoint_failure = DS_CKPT_NONE;
  auto fail = [&](ds_status status, const char* what) {
    s->last_error = what;
    return status;
  };
  try {
    fn();
    return DS_OK;
  } catch (const ds::CheckpointError& e) {
    s->checkpoint_failure = map_failure(e.failure());
    return fail(DS_ERR_CHECKPOINT, e.what());
  } catch (const ds::ConfigError& e) {
    return fail(DS_ERR_CONFIG, e.what());
  } catch (const ds::IoError& e) {
    return fail(DS_ERR_IO, e.what());
  } catch (const ds::NumericError& e) {
    return fail(DS_ERR_NUMERIC, e.what());
  } catch (const ds::DomainError& e) {
    return fail(DS_ERR_NUMERIC, e.what());
  } catch (const ds::ShapeError& e) {
    return fail(DS_ERR_SHAPE, e.what());
  } catch (const ds::IndexError& e) {
    return fail(DS_ERR_INVALID_ARGUMENT, e.what());
  } catch (const ds::ContractError& e) {
    return fail(DS_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::bad_alloc&) {
    return fail(DS_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(DS_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(DS_ERR_INTERNAL, "unknown error");
  }
}

void require(const void* p, const char* name) {
  if (p == nullptr) throw ds::ContractError(std::string(name) + " must not be null");
}

ds::RunConfig effective(const ds_session* s) {
  ds::RunConfig c = s->config;
  c.seed = ds::resolve_seed(s->seed_override, std::getenv("DISTILLSCOPE_SEED"), c.seed);
  if (s->threads_override) c.threads = *s->threads_override;
  if (s->out_override) c.out = *s->out_override;
  c.validate();
  return c;
}

ds::ProgressFn progress_of(const ds_session* s) {
  if (s->progress == nullptr) return {};
  return [fn = s->progress, user = s->progress_user](const std::string& line) { fn(line.c_str(), user); };
}

}  // namespace

extern "C" {

const char* ds_version(void) { return "0.1.0"; }

const char* ds_status_name(ds_status status) {
  switch (status) {
    case DS_OK: return "ok";
    case DS_ERR_INVALID_ARGUMENT: return "invalid argument";
    case DS_ERR_CONFIG: return "config error";
    case DS_ERR_IO: return "I/O error";
    case DS_ERR_CHECKPOINT: return "checkpoint error";
    case DS_ERR_NUMERIC: return "numeric error";
    case DS_ERR_SHAPE: return "shape error";
    case DS_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

ds_status ds_session_create(ds_session** out) {
  if (out == nullptr) return DS_ERR_INVALID_ARGUMENT;
  *out = new (std::nothrow) ds_session();
  return *out ? DS_OK : DS_ERR_INTERNAL;
}

void ds_session_destroy(ds_session* session) { delete session; }

const char* ds_session_last_error(const ds_session* session) {
  return session ? session->last_error.c_str() : "null session";
}

ds_checkpoint_failure ds_session_checkpoint_failure(const ds_session* session) {
  return session ? session->checkpoint_failure : DS_CKPT_NONE;
}

ds_status ds_session_load_config(ds_session* s, const char* path) {
  return guarded(s, [&] {
    require(path, "path");
    s->config = ds::load_run_config(path);
  });
}

ds_status ds_session_parse_config(ds_session* s, const char* json_text) {
  return guarded(s, [&] {
    require(json_text, "json_text");
    s->config = ds::parse_run_config(json_text);
  });
}

ds_status ds_session_set_seed(ds_session* s, uint64_t seed) {
  return guarded(s, [&] { s->seed_override = seed; });
}

ds_status ds_session_set_threads(ds_session* s, int threads) {
  return guarded(s, [&] {
    if (threads < 1) throw ds::ConfigError("threads must be at least 1");
    s->threads_override = threads;
  });
}

ds_status ds_session_set_out(ds_session* s, const char* dir) {
  return guarded(s, [&] {
    require(dir, "dir");
    if (*dir == '\0') throw ds::ConfigError("output directory must not be empty");
    s->out_override = std::string(dir);
  });
}

ds_status ds_session_set_progress(ds_session* s, ds_progress_fn fn, void* user) {
  return guarded(s, [&] {
    s->progress = fn;
    s->progress_user = user;
  });
}

const char* ds_session_config_json(ds_session* s) {
  if (s == nullptr) return "";
  const auto status = guarded(s, [&] { s->config_text = nlohmann::json(effective(s)).dump(2); });
  return status == DS_OK ? s->config_text.c_str() : "";
}

ds_status ds_make_synthetic(ds_session* s) {
  return guarded(s, [&] { ds::run_make_synthetic(effective(s)); });
}

ds_status ds_train_teacher(ds_session* s) {
  return guarded(s, [&] { ds::run_train_teacher(effective(s), progress_of(s)); });
}

ds_status ds_distill_student(ds_session* s, const char* teacher_checkpoint) {
  return guarded(s, [&] {
    require(teacher_checkpoint, "teacher_checkpoint");
    ds::run_distill_student(effective(s), teacher_checkpoint, progress_of(s));
  });
}

ds_status ds_evaluate_checkpoint(ds_session* s, const char* checkpoint, const char* split) {
  return guarded(s, [&] {
    require(checkpoint, "checkpoint");
    std::optional<ds::Split> sp;
    if (split != nullptr) sp = ds::parse_split(split);
    ds::run_evaluate_checkpoint(effective(s), checkpoint, sp);
  });
}

ds_status ds_evaluate_confusion(ds_session* s, const char* confusion_csv) {
  return guarded(s, [&] {
    require(confusion_csv, "confusion_csv");
    ds::run_evaluate_confusion(effective(s), confusion_csv);
  });
}

ds_status ds_explain(ds_session* s, const char* checkpoint, const char* method, int index, int class_index,
                     const char* image_ppm) {
  return guarded(s, [&] {
    require(checkpoint, "checkpoint");
    require(method, "method");
    ds::ExplainRequest request{method, index, class_index, image_ppm ? image_ppm : ""};
    ds::run_explain(effective(s), checkpoint, request);
  });
}

ds_status ds_gradcheck(ds_session* s, double* max_rel_error) {
  return guarded(s, [&] {
    const auto suite = ds::run_gradcheck(effective(s));
    if (max_rel_error) *max_rel_error = suite.max_rel_error();
  });
}

ds_status ds_model_load(ds_session* s, const char* checkpoint, ds_model** out) {
  return guarded(s, [&] {
    require(checkpoint, "checkpoint");
    require(out, "out");
    *out = nullptr;
    auto m = std::make_unique<ds_model>();
    m->checkpoint = ds::load_checkpoint(checkpoint);
    *out = m.release();
  });
}

void ds_model_destroy(ds_model* model) { delete model; }

int ds_model_num_classes(const ds_model* model) { return model ? model->checkpoint.model->num_classes() : 0; }

int ds_model_image_size(const ds_model* model) { return model ? model->checkpoint.model->image_size() : 0; }

ds_status ds_model_predict(ds_session* s, const ds_model* model, const float* chw, size_t chw_len, float* logits,
                           size_t logits_len) {
  return guarded(s, [&] {
    require(model, "model");
    require(chw, "chw");
    require(logits, "logits");
    const auto& m = *model->checkpoint.model;
    const auto side = static_cast<std::int64_t>(m.image_size());
    if (chw_len != static_cast<size_t>(3 * side * side))
      throw ds::ShapeError("input holds " + std::to_string(chw_len) + " values, expected " +
                           std::to_string(3 * side * side));
    if (logits_len != static_cast<size_t>(m.num_classes()))
      throw ds::ShapeError("logits buffer holds " + std::to_string(logits_len) + " values, expected " +
                           std::to_string(m.num_classes()));
    ds::NoGradGuard guard;
    const auto out = m.forward(model->checkpoint.params,
                               ds::TensorF::from({3, side, side}, std::vector<float>(chw, chw + chw_len)));
    for (size_t k = 0; k < logits_len; ++k) logits[k] = out.data()[k];
  });
}

}  // extern "C"
