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

#include <stddef.h>

#include "counselkit/counselkit.h"

/* Compiled as C to keep the public header C-clean. */
int ck_c_header_kappa(double* out) {
  static const int a[6] = {0, 0, 1, 1, 2, 2};
  static const int b[6] = {0, 0, 1, 2, 2, 2};
  ck_context* ctx = NULL;
  ck_status st = ck_context_create(NULL, &ctx);
  if (st != CK_OK) return (int)st;
  st = ck_cohen_kappa(ctx, a, b, 6, NULL, out);
  ck_context_destroy(ctx);
  return (int)st;
}
