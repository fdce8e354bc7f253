#ifndef PLS_H
#define PLS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PlsStatus {
  PLS_STATUS_OK = 0,
  PLS_STATUS_NULL_POINTER = 1,
  PLS_STATUS_INVALID_ARGUMENT = 2,
  PLS_STATUS_IO = 3,
  PLS_STATUS_DATA = 4,
  PLS_STATUS_NUMERICAL = 5,
  PLS_STATUS_CONFIG = 6,
  PLS_STATUS_PANIC = 7,
} PlsStatus;

/**
 * Opaque dataset handle.
 */
typedef struct PlsDataset PlsDataset;

/**
 * Opaque self-training result handle.
 */
typedef struct PlsRunResult PlsRunResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread; empty after a
 * success. Valid until the next call on the same thread.
 */
const char *pls_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pls_version(void);

/**
 * # Safety
 * String arguments must be NUL-terminated; `out` must be writable.
 */
enum PlsStatus pls_dataset_load_csv(const char *path,
                                    const char *label_column,
                                    const char *positive_class,
                                    struct PlsDataset **out);

/**
 * Synthetic logistic data; `beta` holds the intercept then one slope per
 * covariate.
 *
 * # Safety
 * `beta` must point to `beta_len` doubles; `out` must be writable.
 */
enum PlsStatus pls_dataset_synthetic(size_t n_total,
                                     const double *beta,
                                     size_t beta_len,
                                     uint64_t seed,
                                     struct PlsDataset **out);

/**
 * # Safety
 * `dataset` must be a live handle or null; `out` must be writable.
 */
enum PlsStatus pls_dataset_shape(const struct PlsDataset *dataset,
                                 size_t *n_rows,
                                 size_t *n_features);

/**
 * # Safety
 * `dataset` must come from this library and not be used afterwards.
 */
void pls_dataset_free(struct PlsDataset *dataset);

/**
 * Laplace log marginal likelihood of a logistic model under
 * `N(prior_mean, sigma_scale * I)`. `features` is row-major `n x p` without
 * the intercept column; `prior_mean` has `p + 1` entries.
 *
 * # Safety
 * Arrays must have the stated lengths; `out` must be writable.
 */
enum PlsStatus pls_log_marginal(const double *features,
                                const uint8_t *labels,
                                size_t n,
                                size_t p,
                                const double *prior_mean,
                                double sigma_scale,
                                double *out);

/**
 * Splits `dataset`, standardizes with training statistics and runs
 * self-training with default settings. `criterion` is a criterion label
 * such as `ppp` or `gamma-maximin-alpha0.5`; `max_iterations < 0` means no
 * cap.
 *
 * # Safety
 * `dataset` must be a live handle, `criterion` NUL-terminated and `out`
 * writable.
 */
enum PlsStatus pls_run_self_training(const struct PlsDataset *dataset,
                                     double labeled_fraction,
                                     double test_fraction,
                                     uint64_t seed,
                                     const char *criterion,
                                     int64_t max_iterations,
                                     struct PlsRunResult **out);

/**
 * # Safety
 * `run` must be a live handle; `out` writable.
 */
enum PlsStatus pls_run_n_records(const struct PlsRunResult *run, size_t *out);

/**
 * # Safety
 * `run` must be a live handle; `out` writable.
 */
enum PlsStatus pls_run_criterion_evaluations(const struct PlsRunResult *run, uint64_t *out);

/**
 * Test accuracy recorded at `iteration`.
 *
 * # Safety
 * `run` must be a live handle; `out` writable.
 */
enum PlsStatus pls_run_accuracy(const struct PlsRunResult *run, size_t iteration, double *out);

/**
 * Pool index selected at `iteration`, or -1 when nothing was selected.
 *
 * # Safety
 * `run` must be a live handle; `out` writable.
 */
enum PlsStatus pls_run_selected_index(const struct PlsRunResult *run,
                                      size_t iteration,
                                      int64_t *out);

/**
 * The run as JSON. Release the string with `pls_string_free`.
 *
 * # Safety
 * `run` must be a live handle; `out` writable.
 */
enum PlsStatus pls_run_to_json(const struct PlsRunResult *run, char **out);

/**
 * Writes the run file format used by the benchmark CLI.
 *
 * # Safety
 * `run` must be a live handle and `path` NUL-terminated.
 */
enum PlsStatus pls_run_write_json(const struct PlsRunResult *run, const char *path);

/**
 * # Safety
 * `run` must come from this library and not be used afterwards.
 */
void pls_run_free(struct PlsRunResult *run);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void pls_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PLS_H */
