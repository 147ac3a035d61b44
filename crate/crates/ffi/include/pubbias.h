#ifndef PUBBIAS_H
#define PUBBIAS_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PbStatus {
  PB_STATUS_OK = 0,
  PB_STATUS_NULL_POINTER = 1,
  PB_STATUS_INVALID_ARGUMENT = 2,
  PB_STATUS_INPUT_ERROR = 3,
  PB_STATUS_NOT_CONVERGED = 4,
  PB_STATUS_INTERNAL = 5,
} PbStatus;

/**
 * Opaque dataset handle.
 */
typedef struct PbDataset PbDataset;

typedef struct PbFit {
  double mu_hat;
  double tau_hat;
  double se_mu;
  double ci_lower;
  double ci_upper;
  double loglik;
} PbFit;

typedef struct PbBound {
  double p;
  double lower;
  double upper;
  double tau_used;
} PbBound;

/**
 * `inner_mode`: 0 discrete, 1 analytic.
 */
typedef struct PbOptConfig {
  size_t k1;
  size_t k2;
  size_t kprime_stride;
  size_t max_iters;
  size_t restarts;
  size_t screen_iters;
  size_t refine_top;
  size_t floor_starts;
  double step_init;
  double tol_obj;
  double tol_feas;
  uint32_t inner_mode;
  uint64_t seed;
} PbOptConfig;

/**
 * Extended bound with its parts. `degraded` is nonzero when either solve
 * missed the feasibility tolerance.
 */
typedef struct PbExtBound {
  double p;
  double lower;
  double upper;
  double cj_lower;
  double cj_upper;
  double a1_lower;
  double a1_upper;
  double ratio;
  int32_t degraded;
} PbExtBound;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on this thread.
 */
const char *pb_last_error_message(void);

/**
 * Library version, a static string.
 */
const char *pb_version(void);

/**
 * Builds a dataset from `n` effects `y` and standard errors `s`.
 *
 * # Safety
 * `y` and `s` must point to `n` readable doubles; `out` must be writable.
 */
enum PbStatus pb_dataset_from_arrays(const double *y,
                                     const double *s,
                                     size_t n,
                                     struct PbDataset **out);

/**
 * Loads an embedded dataset by name (`corticosteroids`, `clopidogrel`).
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
enum PbStatus pb_dataset_embedded(const char *name, struct PbDataset **out);

/**
 * # Safety
 * `ds` must come from this library and not be used afterwards. Null is a no-op.
 */
void pb_dataset_free(struct PbDataset *ds);

/**
 * Number of studies, 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t pb_dataset_len(const struct PbDataset *ds);

/**
 * # Safety
 * `ds` must be a live handle and `out` writable.
 */
enum PbStatus pb_fit_ml(const struct PbDataset *ds, struct PbFit *out);

/**
 * Copas-Jackson bound on the bias at selection probability `p`.
 *
 * # Safety
 * `ds` must be a live handle and `out` writable.
 */
enum PbStatus pb_cj_bound(const struct PbDataset *ds, double tau, double p, struct PbBound *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum PbStatus pb_opt_config_default(struct PbOptConfig *out);

/**
 * Extended bound at selection probability `p`; `config` may be null for
 * the defaults.
 *
 * # Safety
 * `ds` must be a live handle, `config` null or readable, `out` writable.
 */
enum PbStatus pb_ext_bound(const struct PbDataset *ds,
                           double tau,
                           double mu,
                           double p,
                           const struct PbOptConfig *config,
                           struct PbExtBound *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PUBBIAS_H */
