#ifndef HONEYCOMB_H
#define HONEYCOMB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HcStatus {
  HC_STATUS_OK = 0,
  HC_STATUS_NULL_POINTER = 1,
  HC_STATUS_INVALID_ARGUMENT = 2,
  HC_STATUS_RESOURCE_LIMIT = 3,
  HC_STATUS_BUFFER_TOO_SMALL = 4,
  HC_STATUS_PANIC = 5,
} HcStatus;

/**
 * Opaque environment handle.
 */
typedef struct HcEnvironment HcEnvironment;

typedef struct HcJointPn {
  /**
   * `P(X_2n = 0, Y_2n = 0)`
   */
  double p;
  /**
   * `P(Y_2n = 0)`
   */
  double y_return;
  /**
   * mass dropped by truncation, bounds the error of `p`
   */
  double deficit;
} HcJointPn;

typedef struct HcWalkSummary {
  uint64_t n_steps;
  uint64_t n_returns;
  /**
   * step of the first return to the origin, or -1
   */
  int64_t first_return;
  uint64_t n_vertical;
  int64_t final_x;
  int64_t final_y;
} HcWalkSummary;

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call into the library from the same thread.
 */
const char *hc_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hc_version(void);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum HcStatus hc_env_new_rademacher(uint64_t seed, struct HcEnvironment **out);

/**
 * Periodic environment from a table of `len` entries, each +1 or -1.
 *
 * # Safety
 * `table` must point to `len` readable bytes; `out` must be writable.
 */
enum HcStatus hc_env_new_periodic(const int8_t *table, size_t len, struct HcEnvironment **out);

/**
 * Periodic table with rows resampled at random with probability
 * `min(1, c / |y|^beta)`.
 *
 * # Safety
 * Same contract as [`hc_env_new_periodic`].
 */
enum HcStatus hc_env_new_perturbed(uint64_t seed,
                                   const int8_t *table,
                                   size_t len,
                                   double c,
                                   double beta,
                                   struct HcEnvironment **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `env` must come from an `hc_env_new_*` call and not have been freed.
 */
void hc_env_free(struct HcEnvironment *env);

/**
 * Writes the orientation of row `y` (+1 or -1).
 *
 * # Safety
 * `env` must be a live handle and `out` writable.
 */
enum HcStatus hc_env_orientation(const struct HcEnvironment *env, int64_t y, int8_t *out);

/**
 * Writes the 64-character hex digest plus a NUL into `buf`, which must hold
 * at least 65 bytes.
 *
 * # Safety
 * `env` must be a live handle and `buf` must have `cap` writable bytes.
 */
enum HcStatus hc_env_digest(const struct HcEnvironment *env, char *buf, size_t cap);

/**
 * `P(Y_2n = 0)` for the vertical skeleton.
 *
 * # Safety
 * `out` must be writable.
 */
enum HcStatus hc_return_prob_exact(size_t n, double *out);

/**
 * Exact joint return probability at time `2n` under `env`.
 *
 * # Safety
 * `env` must be a live handle and `out` writable.
 */
enum HcStatus hc_joint_pn(const struct HcEnvironment *env,
                          size_t n,
                          double tail_tol,
                          struct HcJointPn *out);

/**
 * Runs one walk of `n_steps` steps from the origin and writes its summary.
 *
 * # Safety
 * `env` must be a live handle and `out` writable.
 */
enum HcStatus hc_simulate_walk(const struct HcEnvironment *env,
                               uint64_t n_steps,
                               uint64_t seed,
                               struct HcWalkSummary *out);

#endif  /* HONEYCOMB_H */
