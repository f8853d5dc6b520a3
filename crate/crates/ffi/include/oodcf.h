#ifndef OODCF_H
#define OODCF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OodcfStatus {
  OODCF_STATUS_OK = 0,
  OODCF_STATUS_NULL_POINTER = 1,
  OODCF_STATUS_INVALID_ARGUMENT = 2,
  OODCF_STATUS_DIMENSION_MISMATCH = 3,
  OODCF_STATUS_DATA_ERROR = 4,
  OODCF_STATUS_NUMERICAL_ERROR = 5,
  OODCF_STATUS_CAP_EXCEEDED = 6,
  OODCF_STATUS_IO_ERROR = 7,
  OODCF_STATUS_PANIC = 8,
} OodcfStatus;

/**
 * Fitted projection, partition and density models.
 */
typedef struct OodcfPipeline OodcfPipeline;

typedef struct OodcfFitParams {
  /**
   * Latent dims; 0 keeps every input column.
   */
  size_t k;
  double slack;
  /**
   * Largest k for the exhaustive partition search.
   */
  size_t cap;
  /**
   * true: unit-variance scaling; false: centering only.
   */
  bool standardize;
} OodcfFitParams;

typedef struct OodcfGenerationParams {
  /**
   * 0 = full two-step, 1 = single joint Gaussian, 2 = non-dis step only,
   * 3 = dis step only.
   */
  uint32_t variant;
  /**
   * 0 = non-dis step first, 1 = dis step first.
   */
  uint32_t order;
  double step_size;
  size_t max_iter;
  double stop_quantile;
  /**
   * Target class, or -1 for the closest class.
   */
  int64_t target;
} OodcfGenerationParams;

typedef struct OodcfScore {
  double l_n;
  double l_d;
  double l_total;
} OodcfScore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *oodcf_version(void);

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *oodcf_last_error_message(void);

struct OodcfFitParams oodcf_fit_params_default(void);

struct OodcfGenerationParams oodcf_generation_params_default(void);

/**
 * Fits a pipeline on ID training rows `features` (n_rows × n_cols) with
 * class ids `labels` in `0..C`. Partition entropies use `eval_features`
 * (n_eval × n_cols) when non-null, else the training rows.
 *
 * # Safety
 * Array pointers must be valid for the stated lengths; `params` may be
 * null for defaults; `out` must be a valid pointer to write the handle to.
 */
enum OodcfStatus oodcf_pipeline_fit(const double *features,
                                    size_t n_rows,
                                    size_t n_cols,
                                    const uint32_t *labels,
                                    const double *eval_features,
                                    size_t n_eval,
                                    const struct OodcfFitParams *params,
                                    struct OodcfPipeline **out);

/**
 * Releases a pipeline. Null is ignored.
 *
 * # Safety
 * `pipeline` must come from [`oodcf_pipeline_fit`] and not be used again.
 */
void oodcf_pipeline_free(struct OodcfPipeline *pipeline);

/**
 * Writes input dimension, latent dimension and number of ID classes; any
 * output pointer may be null.
 *
 * # Safety
 * `pipeline` must be a live handle; outputs must be null or writable.
 */
enum OodcfStatus oodcf_pipeline_dims(const struct OodcfPipeline *pipeline,
                                     size_t *input_dim,
                                     size_t *latent_dim,
                                     size_t *n_classes);

/**
 * Fills `is_discriminative[j]` with 1 when latent dim j is in z_d, else 0.
 * `len` must equal the latent dimension.
 *
 * # Safety
 * `is_discriminative` must be writable for `len` bytes.
 */
enum OodcfStatus oodcf_pipeline_partition(const struct OodcfPipeline *pipeline,
                                          uint8_t *is_discriminative,
                                          size_t len);

/**
 * OOD score of one raw input row of length `n_cols`.
 *
 * # Safety
 * `x` must be readable for `n_cols` values; `out` must be writable.
 */
enum OodcfStatus oodcf_pipeline_score(const struct OodcfPipeline *pipeline,
                                      const double *x,
                                      size_t n_cols,
                                      struct OodcfScore *out);

/**
 * Generates a counterfactual for `x` into `counterfactual` (both length
 * `n_cols`). `params` may be null for defaults; `score_after` may be null.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum OodcfStatus oodcf_pipeline_generate(const struct OodcfPipeline *pipeline,
                                         const double *x,
                                         size_t n_cols,
                                         const struct OodcfGenerationParams *params,
                                         double *counterfactual,
                                         struct OodcfScore *score_after);

/**
 * Rank-based AUROC of `positive` against `negative` scores.
 *
 * # Safety
 * Arrays must be readable for the stated lengths; `out` writable.
 */
enum OodcfStatus oodcf_auroc(const double *positive,
                             size_t n_positive,
                             const double *negative,
                             size_t n_negative,
                             double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OODCF_H */
