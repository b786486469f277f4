#ifndef COVALIGN_H
#define COVALIGN_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CovalignStatus {
  COVALIGN_STATUS_OK = 0,
  COVALIGN_STATUS_NULL_POINTER = 1,
  COVALIGN_STATUS_INVALID_ARGUMENT = 2,
  COVALIGN_STATUS_SHAPE_MISMATCH = 3,
  COVALIGN_STATUS_DEGENERATE_COVARIANCE = 4,
  COVALIGN_STATUS_EMPTY_STATE = 5,
  COVALIGN_STATUS_SERIALIZATION = 6,
  COVALIGN_STATUS_PANIC = 7,
} CovalignStatus;

/**
 * Trials of one domain.
 */
typedef struct CovalignDataset CovalignDataset;

/**
 * A fitted alignment `R̄^{-1/2}`.
 */
typedef struct CovalignEa CovalignEa;

/**
 * Running covariance sum for incremental fitting.
 */
typedef struct CovalignEaState CovalignEaState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *covalign_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *covalign_version(void);

/**
 * Copies `n_trials * channels * samples` values into a new dataset.
 *
 * # Safety
 * `data` must point to that many readable doubles; `out` must be writable.
 */
enum CovalignStatus covalign_dataset_new(const double *data,
                                         size_t n_trials,
                                         size_t channels,
                                         size_t samples,
                                         double sampling_rate,
                                         struct CovalignDataset **out);

/**
 * # Safety
 * `ds` must be null or a handle from this library, not yet freed.
 */
void covalign_dataset_free(struct CovalignDataset *ds);

/**
 * Writes trial count, channels and samples; any output may be null.
 *
 * # Safety
 * `ds` must be a live handle; non-null outputs must be writable.
 */
enum CovalignStatus covalign_dataset_shape(const struct CovalignDataset *ds,
                                           size_t *n_trials,
                                           size_t *channels,
                                           size_t *samples);

/**
 * Copies the dataset back out in the input layout.
 *
 * # Safety
 * `ds` must be a live handle and `out` must hold `len` writable doubles.
 */
enum CovalignStatus covalign_dataset_copy_data(const struct CovalignDataset *ds,
                                               double *out,
                                               size_t len);

/**
 * Fits EA on every trial of `ds`.
 *
 * # Safety
 * `ds` must be a live handle; `out` must be writable.
 */
enum CovalignStatus covalign_ea_fit(const struct CovalignDataset *ds, struct CovalignEa **out);

/**
 * # Safety
 * `t` must be null or a live handle.
 */
void covalign_ea_free(struct CovalignEa *t);

/**
 * # Safety
 * `t` must be a live handle; `channels` must be writable.
 */
enum CovalignStatus covalign_ea_channels(const struct CovalignEa *t, size_t *channels);

/**
 * Copies the `c x c` alignment map, row-major.
 *
 * # Safety
 * `t` must be a live handle and `out` must hold `len` writable doubles.
 */
enum CovalignStatus covalign_ea_map(const struct CovalignEa *t, double *out, size_t len);

/**
 * Copies the `c x c` reference mean covariance, row-major.
 *
 * # Safety
 * `t` must be a live handle and `out` must hold `len` writable doubles.
 */
enum CovalignStatus covalign_ea_reference(const struct CovalignEa *t, double *out, size_t len);

/**
 * Aligns every trial of `ds` into a new dataset.
 *
 * # Safety
 * Both handles must be live; `out` must be writable.
 */
enum CovalignStatus covalign_ea_apply(const struct CovalignEa *t,
                                      const struct CovalignDataset *ds,
                                      struct CovalignDataset **out);

/**
 * Frobenius distance between the dataset's mean covariance and identity.
 *
 * # Safety
 * `ds` must be a live handle; `out` must be writable.
 */
enum CovalignStatus covalign_ea_residual(const struct CovalignDataset *ds, double *out);

/**
 * Share of absolute mass on the diagonal of a row-major `n x n` matrix.
 *
 * # Safety
 * `matrix` must hold `n * n` readable doubles; `out` must be writable.
 */
enum CovalignStatus covalign_diag_dominance(const double *matrix, size_t n, double *out);

/**
 * JSON audit record of the transform. Free the string with
 * [`covalign_string_free`].
 *
 * # Safety
 * `t` must be a live handle; `domain_id` must be null or a NUL-terminated
 * UTF-8 string; `out` must be writable.
 */
enum CovalignStatus covalign_ea_to_json(const struct CovalignEa *t,
                                        const char *domain_id,
                                        char **out);

/**
 * Rebuilds a transform from [`covalign_ea_to_json`] output.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum CovalignStatus covalign_ea_from_json(const char *json, struct CovalignEa **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void covalign_string_free(char *s);

/**
 * # Safety
 * `out` must be writable.
 */
enum CovalignStatus covalign_ea_state_new(struct CovalignEaState **out);

/**
 * # Safety
 * `state` must be null or a live handle.
 */
void covalign_ea_state_free(struct CovalignEaState *state);

/**
 * Adds one `channels x samples` row-major trial to the running sum.
 *
 * # Safety
 * `state` must be a live handle; `trial` must hold `channels * samples`
 * readable doubles.
 */
enum CovalignStatus covalign_ea_state_update(struct CovalignEaState *state,
                                             const double *trial,
                                             size_t channels,
                                             size_t samples);

/**
 * # Safety
 * `state` must be a live handle; `count` must be writable.
 */
enum CovalignStatus covalign_ea_state_count(const struct CovalignEaState *state, size_t *count);

/**
 * Transform from the trials absorbed so far. The state stays usable.
 *
 * # Safety
 * `state` must be a live handle; `out` must be writable.
 */
enum CovalignStatus covalign_ea_state_finalize(const struct CovalignEaState *state,
                                               struct CovalignEa **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COVALIGN_H */
