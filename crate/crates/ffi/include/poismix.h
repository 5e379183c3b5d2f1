#ifndef POISMIX_H
#define POISMIX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PoismixStatus {
  POISMIX_STATUS_OK = 0,
  POISMIX_STATUS_NULL_POINTER = 1,
  POISMIX_STATUS_DOMAIN = 2,
  POISMIX_STATUS_PRECONDITION = 3,
  POISMIX_STATUS_DEGENERATE = 4,
  POISMIX_STATUS_DESIGN = 5,
  POISMIX_STATUS_PARSE = 6,
  POISMIX_STATUS_CONFIG = 7,
  POISMIX_STATUS_IO = 8,
  POISMIX_STATUS_PANIC = 9,
} PoismixStatus;

typedef enum PoismixAlgorithm {
  POISMIX_ALGORITHM_VDM = 0,
  POISMIX_ALGORITHM_VEM = 1,
  POISMIX_ALGORITHM_ISDM = 2,
} PoismixAlgorithm;

// Result of an NPMLE fit.
typedef struct PoismixFit PoismixFit;

// Discrete mixing distribution on `[0, B]`.
typedef struct PoismixMeasure PoismixMeasure;

// Counts with per-cell read depths and a support bound.
typedef struct PoismixSample PoismixSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer is
// valid until the next failing call on the same thread.
const char *poismix_last_error(void);

// Library version as a static NUL-terminated string.
const char *poismix_version(void);

// Builds a measure from `len` atoms. Weights are normalised; atoms closer
// than `1e-9 * bound` are merged.
//
// # Safety
// `support` and `weights` must point to `len` readable doubles; `out` must
// be writable.
enum PoismixStatus poismix_measure_new(const double *support,
                                       const double *weights,
                                       size_t len,
                                       double bound,
                                       struct PoismixMeasure **out);

// # Safety
// `m` must be NULL or a handle from this library not yet freed.
void poismix_measure_free(struct PoismixMeasure *m);

// Number of atoms, or 0 for NULL.
//
// # Safety
// `m` must be NULL or a live handle.
size_t poismix_measure_len(const struct PoismixMeasure *m);

// Support bound, or NaN for NULL.
//
// # Safety
// `m` must be NULL or a live handle.
double poismix_measure_bound(const struct PoismixMeasure *m);

// Copies the sorted support and weights into caller buffers of capacity
// `cap`, which must be at least [`poismix_measure_len`].
//
// # Safety
// `m` must be a live handle; `support` and `weights` must hold `cap` doubles.
enum PoismixStatus poismix_measure_atoms(const struct PoismixMeasure *m,
                                         double *support,
                                         double *weights,
                                         size_t cap);

// Builds a count sample. `read_depths` may be NULL for unit depths.
//
// # Safety
// `counts` must hold `len` values, `read_depths` `len` values when non-NULL;
// `out` must be writable.
enum PoismixStatus poismix_sample_new(const uint64_t *counts,
                                      const double *read_depths,
                                      size_t len,
                                      double bound,
                                      struct PoismixSample **out);

// # Safety
// `s` must be NULL or a handle from this library not yet freed.
void poismix_sample_free(struct PoismixSample *s);

// Mean log-likelihood of the sample under the mixture, without the
// `log x!` constants.
//
// # Safety
// Handles must be live; `out` writable.
enum PoismixStatus poismix_phi(const struct PoismixMeasure *m,
                               const struct PoismixSample *s,
                               double *out);

// Directional derivative of the log-likelihood towards a point mass at
// `lambda`.
//
// # Safety
// Handles must be live; `out` writable.
enum PoismixStatus poismix_phi_prime(const struct PoismixMeasure *m,
                                     double lambda,
                                     const struct PoismixSample *s,
                                     double *out);

// Fits the NPMLE. `stop_tol <= 0` and `max_iters == 0` select the defaults
// (0.01 and 2000).
//
// # Safety
// `s` must be live; `out` writable.
enum PoismixStatus poismix_fit(const struct PoismixSample *s,
                               enum PoismixAlgorithm algorithm,
                               double stop_tol,
                               size_t max_iters,
                               struct PoismixFit **out);

// # Safety
// `f` must be NULL or a handle from this library not yet freed.
void poismix_fit_free(struct PoismixFit *f);

// New measure handle holding a copy of the estimate.
//
// # Safety
// `f` must be live; `out` writable.
enum PoismixStatus poismix_fit_estimate(const struct PoismixFit *f, struct PoismixMeasure **out);

// Final log-likelihood, iteration count and convergence flag. Any output
// pointer may be NULL.
//
// # Safety
// `f` must be live; non-NULL outputs writable.
enum PoismixStatus poismix_fit_summary(const struct PoismixFit *f,
                                       double *phi_out,
                                       size_t *iterations_out,
                                       bool *converged_out);

// W1 distance between two measures.
//
// # Safety
// Handles must be live; `out` writable.
enum PoismixStatus poismix_w1_measures(const struct PoismixMeasure *a,
                                       const struct PoismixMeasure *b,
                                       double *out);

// W1 distance between the Poisson mixtures (unit read depth) of two
// measures, each truncated once its tail mass is below `tail_tol`.
//
// # Safety
// Handles must be live; `out` writable.
enum PoismixStatus poismix_w1_mixtures(const struct PoismixMeasure *a,
                                       const struct PoismixMeasure *b,
                                       double tail_tol,
                                       double *out);

// Pseudo-F of an `n x n` row-major squared-distance matrix with group
// labels `0..K`.
//
// # Safety
// `d` must hold `n * n` doubles and `groups` `n` labels; `out` writable.
enum PoismixStatus poismix_pseudo_f(const double *d, size_t n, const size_t *groups, double *out);

// Monte Carlo permutation test. A degenerate statistic yields
// `statistic = NaN` and `p_value = 1`.
//
// # Safety
// As for [`poismix_pseudo_f`]; outputs writable.
enum PoismixStatus poismix_permutation_test(const double *d,
                                            size_t n,
                                            const size_t *groups,
                                            size_t n_perm,
                                            uint64_t seed,
                                            double *statistic_out,
                                            double *p_value_out);

// Benjamini-Hochberg at level `q`. Writes one rejection flag and one
// adjusted p-value per input.
//
// # Safety
// `p_values`, `rejected` and `adjusted` must each hold `m` elements.
enum PoismixStatus poismix_benjamini_hochberg(const double *p_values,
                                              size_t m,
                                              double q,
                                              bool *rejected,
                                              double *adjusted);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POISMIX_H */
