/*
 * Copyright (C) 2026 TokenCarve Contributors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the tokencarve library. All functions return tc_status;
 * on failure tc_last_error() gives a human-readable reason (thread-local,
 * valid until the next failing call on the same thread). Handles are opaque
 * and must be released with their matching free function.
 */

#ifndef TOKENCARVE_H
#define TOKENCARVE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define TC_API __declspec(dllexport)
#else
#define TC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tc_status {
    TC_OK = 0,
    TC_ERR_CONFIG = 1,  /* invalid configuration, schema or shape */
    TC_ERR_NUMERIC = 2, /* numeric failure (non-convergence, overflow) */
    TC_ERR_IO = 3,      /* filesystem or serialization failure */
    TC_ERR_INVALID = 4  /* null pointer or otherwise unusable argument */
} tc_status;

/* Opaque dense tensor handle (f64, 1-3 dims, row-major). */
typedef struct tc_tensor tc_tensor;

TC_API const char* tc_version(void);

/* Message for the most recent failure on this thread; never NULL. */
TC_API const char* tc_last_error(void);

/* ---- tensors ---------------------------------------------------------- */

TC_API tc_status tc_tensor_create(const uint32_t* dims, size_t ndim, const double* data,
                                  tc_tensor** out);
TC_API tc_status tc_tensor_read(const char* path, tc_tensor** out);
TC_API tc_status tc_tensor_write(const tc_tensor* tensor, const char* path);
TC_API void tc_tensor_free(tc_tensor* tensor);

TC_API size_t tc_tensor_ndim(const tc_tensor* tensor);
TC_API tc_status tc_tensor_dims(const tc_tensor* tensor, uint32_t* dims_out);
/* Pointer into the handle; valid while the handle lives. */
TC_API const double* tc_tensor_data(const tc_tensor* tensor);

/* Numerical rank of a 2-D tensor: singular values above
 * max(rel_tol, max(m,n)*eps) * sigma_max. Pass rel_tol <= 0 for the
 * default 1e-10. */
TC_API tc_status tc_tensor_rank(const tc_tensor* tensor, double rel_tol, size_t* rank_out);

/* ---- whole runs -------------------------------------------------------- */
/*
 * Each entry point takes the JSON run configuration as text and an output
 * directory (created if missing). Outputs are written atomically; a failing
 * run leaves no partial files.
 *
 *   tc_run_gen    -> sequence.ctns, visual.ctns, input.json
 *   tc_run_carve  -> carved.ctns, kept_indices.json, score_report.json,
 *                    metrics.json
 *   tc_run_sweep  -> sweep.csv, summary.json
 *   tc_run_ablate -> ablate.csv, ablate.json
 *
 * tc_run_carve optionally replaces the synthetic system/visual/prompt
 * segments with tensors loaded from the given paths (pass NULL to keep the
 * generated segment); row counts must match the configured segment lengths.
 */

TC_API tc_status tc_run_gen(const char* config_json, const char* out_dir);
TC_API tc_status tc_run_carve(const char* config_json, const char* system_path,
                              const char* visual_path, const char* prompt_path,
                              const char* out_dir);
TC_API tc_status tc_run_sweep(const char* config_json, const char* out_dir);
TC_API tc_status tc_run_ablate(const char* config_json, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* TOKENCARVE_H */
