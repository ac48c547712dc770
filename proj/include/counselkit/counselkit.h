// Copyright 2026 The counselkit Authors.
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

#ifndef COUNSELKIT_COUNSELKIT_H
#define COUNSELKIT_COUNSELKIT_H

#include <stddef.h>

#if defined(_WIN32)
#define CK_API __declspec(dllexport)
#else
#define CK_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ck_status {
  CK_OK = 0,
  CK_INVALID_ARGUMENT = 1,
  CK_IO = 2,
  CK_PARSE = 3,
  CK_NOT_FOUND = 4,
  CK_CONFLICT = 5,
  CK_BACKEND = 6,
  CK_NUMERIC = 7,
  CK_GONE = 8,
  CK_INTERNAL = 9,
  CK_UNAUTHORIZED = 10
} ck_status;

typedef struct ck_context ck_context;
typedef struct ck_service ck_service;

/* Library version, static storage. */
CK_API const char* ck_version(void);

/* Short name for a status ("parse", "conflict", ...), static storage. */
CK_API const char* ck_status_name(ck_status status);

/* `config_json` may be NULL. Its top-level keys are defaults merged under the
   arguments of every ck_run call (seed, out_dir, tokenizer, backend, ...). */
CK_API ck_status ck_context_create(const char* config_json, ck_context** out);
CK_API void ck_context_destroy(ck_context* ctx);

/* Message of the last failed call on this context, or "" when none. Valid
   until the next call on the same context. */
CK_API const char* ck_last_error(const ck_context* ctx);

/* Releases strings returned through char** out-parameters. */
CK_API void ck_free_string(char* s);

/* Runs a pipeline command. `args_json` is a JSON object of options. On
   success *out_json receives the JSON summary (free with ck_free_string). */
CK_API ck_status ck_run(ck_context* ctx, const char* command, const char* args_json, char** out_json);

/* Newline-separated list of command names. Free with ck_free_string. */
CK_API char* ck_command_names(void);

/* Sentence-level metrics. `tokenizer` is "auto", "char" or "whitespace"
   (NULL means auto). */
CK_API ck_status ck_bleu(ck_context* ctx, const char* candidate, const char* reference, int n,
                         const char* tokenizer, double* out);
CK_API ck_status ck_rouge_l(ck_context* ctx, const char* candidate, const char* reference,
                            const char* tokenizer, double* out);

/* Levels are ordinals 0..2. `weighting` is "nominal" or "linear" (NULL means nominal). */
CK_API ck_status ck_cohen_kappa(ck_context* ctx, const int* a, const int* b, size_t n, const char* weighting,
                                double* out);

/* Study service. `config_json` keys: data_dir, snapshot_every,
   background_scoring, seed, randomize_seed, prompt_mode, target, backend. */
CK_API ck_status ck_service_create(ck_context* ctx, const char* config_json, ck_service** out);
CK_API void ck_service_destroy(ck_service* svc);

/* Registers an item set from an episodes JSONL file. */
CK_API ck_status ck_service_add_item_set(ck_service* svc, const char* item_set_id, const char* episodes_path);

/* Dispatches one HTTP request without a socket. `headers_json` is an object
   of header names to values and may be NULL. *out_body receives the JSON
   response body. Returns CK_OK whenever a response was produced; the HTTP
   status tells success from failure. */
CK_API ck_status ck_service_handle(ck_service* svc, const char* method, const char* path, const char* headers_json,
                                   const char* body, int* out_status, char** out_body);

/* Binds a listener; port 0 picks a free port, written to *out_port. */
CK_API ck_status ck_service_bind(ck_service* svc, const char* host, int port, int* out_port);
/* Blocks serving requests until ck_service_stop. */
CK_API ck_status ck_service_listen(ck_service* svc);
CK_API void ck_service_stop(ck_service* svc);

/* Waits for background scoring to drain. */
CK_API void ck_service_wait_idle(ck_service* svc);

/* Message of the last failed service call. */
CK_API const char* ck_service_last_error(const ck_service* svc);

#ifdef __cplusplus
}
#endif

#endif
