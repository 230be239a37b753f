#ifndef GROUPRISK_H
#define GROUPRISK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GrStatus {
  GR_STATUS_OK = 0,
  GR_STATUS_NULL_POINTER = 1,
  GR_STATUS_INVALID_UTF8 = 2,
  GR_STATUS_CONFIG_PARSE = 3,
  GR_STATUS_SCHEMA = 4,
  GR_STATUS_INVALID_PARAMS = 5,
  GR_STATUS_UNKNOWN_PRESET = 6,
  GR_STATUS_NET_PROFIT_VIOLATED = 7,
  /**
   * Lattice, transform or series failure.
   */
  GR_STATUS_NUMERICAL = 8,
  GR_STATUS_NOT_REDUCED = 9,
  GR_STATUS_PANIC = 10,
} GrStatus;

/**
 * Opaque model handle.
 */
typedef struct GrModel GrModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a model from a JSON config. `*out` receives the handle.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum GrStatus gr_model_from_json(const char *json, struct GrModel **out);

/**
 * Creates a model from a catalog preset; `params_json` may be null.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out` must be writable.
 */
enum GrStatus gr_model_from_preset(const char *name, const char *params_json, struct GrModel **out);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `model` must come from a constructor of this library and not be used again.
 */
void gr_model_free(struct GrModel *model);

/**
 * Builds the lattice model. `step <= 0` or `points == 0` selects the config
 * or model default.
 *
 * # Safety
 * `model` must be a live handle.
 */
enum GrStatus gr_model_reduce(struct GrModel *model, double step, size_t points);

/**
 * Intensity of non-empty groups and mean total claim per group.
 *
 * # Safety
 * `model` must be a reduced live handle; outputs must be writable.
 */
enum GrStatus gr_reduced_parameters(const struct GrModel *model, double *lambda, double *y1_mean);

/**
 * Safety loading `rho`.
 *
 * # Safety
 * `model` must be a reduced live handle; `out` must be writable.
 */
enum GrStatus gr_safety_loading(const struct GrModel *model, double *out);

/**
 * Ruin probability at zero capital.
 *
 * # Safety
 * `model` must be a reduced live handle; `out` must be writable.
 */
enum GrStatus gr_ruin_probability_zero(const struct GrModel *model, double *out);

/**
 * Conditional mean ruin time from zero capital.
 *
 * # Safety
 * `model` must be a reduced live handle; `out` must be writable.
 */
enum GrStatus gr_expected_ruin_time_zero(const struct GrModel *model, double *out);

/**
 * Lundberg exponent; `*exists` is false (and `*out` untouched) for
 * heavy-tailed claims.
 *
 * # Safety
 * `model` must be a reduced live handle; outputs must be writable.
 */
enum GrStatus gr_lundberg_exponent(const struct GrModel *model, double *out, bool *exists);

/**
 * Ruin probabilities at `n` capitals by the compound-geometric series.
 *
 * # Safety
 * `u` must point to `n` readable and `out` to `n` writable doubles.
 */
enum GrStatus gr_psi(const struct GrModel *model,
                     const double *u,
                     size_t n,
                     double tol,
                     double *out);

/**
 * Ladder-height Monte Carlo estimates (and standard errors) of the ruin
 * probability at `n` capitals.
 *
 * # Safety
 * `u` must point to `n` readable doubles; `estimate` and `std_error` to `n`
 * writable doubles.
 */
enum GrStatus gr_simulate_ladder(const struct GrModel *model,
                                 const double *u,
                                 size_t n,
                                 uint64_t replications,
                                 uint64_t seed,
                                 double *estimate,
                                 double *std_error);

/**
 * Length in bytes of the last error message on this thread (0 when none),
 * excluding the terminating NUL.
 */
size_t gr_last_error_length(void);

/**
 * Copies the last error message into `buf` (truncated, NUL-terminated) and
 * returns the full message length. Returns 0 when there is no error.
 *
 * # Safety
 * `buf` must point to `len` writable bytes, or be null with `len == 0`.
 */
size_t gr_last_error_message(char *buf, size_t len);

/**
 * Clears the last error on this thread.
 */
void gr_clear_last_error(void);

/**
 * Library version, a static NUL-terminated string.
 */
const char *gr_version(void);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* GROUPRISK_H */
