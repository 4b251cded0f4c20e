#ifndef CSLW_H
#define CSLW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CslwStatus {
  CSLW_STATUS_OK = 0,
  CSLW_STATUS_NULL_POINTER = 1,
  CSLW_STATUS_INVALID_UTF8 = 2,
  CSLW_STATUS_PARSE = 3,
  CSLW_STATUS_IO = 4,
  CSLW_STATUS_UNSUPPORTED = 5,
  CSLW_STATUS_NO_EFFECTIVE_SAMPLES = 6,
  CSLW_STATUS_FAILED = 7,
  CSLW_STATUS_PANIC = 8,
} CslwStatus;

/**
 * Opaque model handle.
 */
typedef struct CslwModel CslwModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Load a model file; `.bif` is read as a network, anything else as DCP.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a writable pointer.
 */
enum CslwStatus cslw_model_load(const char *path, struct CslwModel **out);

/**
 * Parse DCP rule text.
 *
 * # Safety
 * `source` must be a nul-terminated string and `out` a writable pointer.
 */
enum CslwStatus cslw_model_from_dcp(const char *source, struct CslwModel **out);

/**
 * Parse BIF network text.
 *
 * # Safety
 * `source` must be a nul-terminated string and `out` a writable pointer.
 */
enum CslwStatus cslw_model_from_bif(const char *source, struct CslwModel **out);

/**
 * # Safety
 * `model` must be null or a handle from a loader, not yet freed.
 */
void cslw_model_free(struct CslwModel *model);

/**
 * Number of variables, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t cslw_model_variable_count(const struct CslwModel *model);

/**
 * Number of rules of the model's program (the tree program for BIF).
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t cslw_model_rule_count(const struct CslwModel *model);

/**
 * The model's program as DCP text. Free with [`cslw_string_free`].
 * Returns null for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
char *cslw_model_to_dcp(const struct CslwModel *model);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void cslw_string_free(char *s);

/**
 * P(query | evidence) with `method` (`lw-full`, `lw`, `cslw`, `exact-enum`,
 * `exact-ve` or `exact-ctx`). `evidence` may be null for none. Sampling
 * methods draw `samples` samples from `seed`.
 *
 * # Safety
 * `model` must be a live handle, the strings nul-terminated, and `out` a
 * writable pointer.
 */
enum CslwStatus cslw_infer(const struct CslwModel *model,
                           const char *method,
                           const char *query,
                           const char *evidence,
                           uint64_t samples,
                           uint64_t seed,
                           double *out);

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *cslw_last_error(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CSLW_H */
