/* C interface to the repressilator simulation and inference library. */

#ifndef REPRESSILATOR_H
#define REPRESSILATOR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of a C API call.
 */
typedef enum RpStatus {
  RP_STATUS_OK = 0,
  /**
   * A pointer was null or an argument violated a documented precondition.
   */
  RP_STATUS_INVALID_ARGUMENT = 1,
  /**
   * A runtime or numerical failure; details via `rp_last_error_message`.
   */
  RP_STATUS_RUNTIME_ERROR = 2,
  /**
   * An internal panic was caught at the boundary.
   */
  RP_STATUS_PANIC = 3,
} RpStatus;

/**
 * A generated dataset: metadata plus the observation record.
 */
typedef struct RpDataset RpDataset;

/**
 * A completed sampler run.
 */
typedef struct RpNpmcResult RpNpmcResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *rp_version(void);

/**
 * Message of the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread; do not free it.
 */
const char *rp_last_error_message(void);

/**
 * Releases a string allocated by this library.
 *
 * # Safety
 * `s` must have been returned by a function of this library that documents
 * `rp_string_free` as its deallocator, and must not be used afterwards.
 */
void rp_string_free(char *s);

/**
 * Generates a dataset from an experiment configuration.
 *
 * `config_json` may be null or empty for the default configuration;
 * otherwise it must be a NUL-terminated JSON document in the experiment
 * config schema. On success `*out` owns the new dataset.
 *
 * # Safety
 * `out` must be a valid pointer. `config_json`, when non-null, must point
 * to a NUL-terminated string that outlives the call.
 */
enum RpStatus rp_dataset_generate(const char *config_json, uint64_t seed, struct RpDataset **out);

/**
 * Number of observations in the dataset.
 *
 * # Safety
 * `dataset` must be a live handle from [`rp_dataset_generate`].
 */
size_t rp_dataset_n_observations(const struct RpDataset *dataset);

/**
 * Borrows the observation buffer: `2 * n_observations` doubles laid out as
 * `[y1, y2]` per tick. The pointer is owned by the handle.
 *
 * # Safety
 * `dataset` must be a live handle; `out_ptr` and `out_len` must be valid.
 */
enum RpStatus rp_dataset_observations(const struct RpDataset *dataset,
                                      const double **out_ptr,
                                      size_t *out_len);

/**
 * Releases a dataset handle.
 *
 * # Safety
 * `dataset` must be null or a live handle; it must not be used afterwards.
 */
void rp_dataset_free(struct RpDataset *dataset);

/**
 * Bootstrap-filter log-likelihood estimate of a parameter vector.
 *
 * `theta` points to 4 doubles `(Q, m, alpha, beta_a)`.
 *
 * # Safety
 * `dataset` must be a live handle; `theta` must point to 4 readable
 * doubles; `out` must be writable.
 */
enum RpStatus rp_log_likelihood(const struct RpDataset *dataset,
                                const double *theta,
                                size_t n_particles,
                                uint64_t seed,
                                double *out);

/**
 * Runs the nonlinear population Monte Carlo sampler against a dataset with
 * the uniform reference prior. Clip count and covariance jitter take their
 * defaults (`floor(sqrt(n_samples))`, `1e-6`).
 *
 * # Safety
 * `dataset` must be a live handle; `out` must be writable.
 */
enum RpStatus rp_npmc_run(const struct RpDataset *dataset,
                          size_t n_samples,
                          size_t n_iterations,
                          size_t n_particles,
                          uint64_t seed,
                          struct RpNpmcResult **out);

/**
 * Number of completed iterations (including the prior-sampling one).
 *
 * # Safety
 * `result` must be a live handle from [`rp_npmc_run`].
 */
size_t rp_npmc_result_n_iterations(const struct RpNpmcResult *result);

/**
 * Final posterior-mean estimate, written as 4 doubles `(Q, m, alpha, beta_a)`.
 *
 * # Safety
 * `result` must be a live handle; `out` must point to 4 writable doubles.
 */
enum RpStatus rp_npmc_result_posterior_mean(const struct RpNpmcResult *result, double *out);

/**
 * Posterior mean-square-error estimate of the final iteration.
 *
 * # Safety
 * `result` must be a live handle; `out` must be writable.
 */
enum RpStatus rp_npmc_result_mse(const struct RpNpmcResult *result, double *out);

/**
 * Serializes the run summary (config plus per-iteration proposal moments
 * and estimates) as JSON. Free with [`rp_string_free`].
 *
 * # Safety
 * `result` must be a live handle; `out` must be writable.
 */
enum RpStatus rp_npmc_result_to_json(const struct RpNpmcResult *result, char **out);

/**
 * Releases a sampler result handle.
 *
 * # Safety
 * `result` must be null or a live handle; it must not be used afterwards.
 */
void rp_npmc_result_free(struct RpNpmcResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REPRESSILATOR_H */
