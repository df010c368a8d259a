/* C interface for the hlce estimation library. Generated by cbindgen. */

#ifndef HLCE_H
#define HLCE_H

/* This file is auto-generated; edit build.rs / src/lib.rs instead. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Estimator kinds.
 */
typedef enum HlceEstimator {
  HlceEstimator_Naive = 0,
  HlceEstimator_Reg = 1,
  HlceEstimator_Pro = 2,
  HlceEstimator_Mr = 3,
} HlceEstimator;

/**
 * Nuisance backends.
 */
typedef enum HlceNuisance {
  HlceNuisance_CorrectParametric = 0,
  HlceNuisance_MisspecParametric = 1,
  HlceNuisance_Kernel = 2,
  HlceNuisance_MlpShared = 3,
  HlceNuisance_Oracle = 4,
} HlceNuisance;

/**
 * Data sharing between the two stages.
 */
typedef enum HlceSplitting {
  HlceSplitting_FullData = 0,
  HlceSplitting_TwoFold = 1,
  /**
   * Uses the `folds` argument of `hlce_fit`.
   */
  HlceSplitting_CrossFit = 2,
} HlceSplitting;

/**
 * Second-stage regressors.
 */
typedef enum HlceStage2 {
  HlceStage2_Ols = 0,
  HlceStage2_Poly2 = 1,
  HlceStage2_KernelRidge = 2,
  HlceStage2_Mlp = 3,
} HlceStage2;

/**
 * Status codes returned by fallible calls.
 */
typedef enum HlceStatus {
  HlceStatus_Ok = 0,
  HlceStatus_NullArgument = 1,
  HlceStatus_InvalidArgument = 2,
  HlceStatus_RuntimeError = 3,
  HlceStatus_Panic = 4,
} HlceStatus;

/**
 * Opaque combined panel.
 */
typedef struct HlceDataset HlceDataset;

/**
 * Opaque fitted effect model.
 */
typedef struct HlceModel HlceModel;

/**
 * Opaque ground-truth sidecar.
 */
typedef struct HlceTruth HlceTruth;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message into `buf` (NUL-terminated, truncated to
 * `cap`); returns the full message length in bytes excluding the NUL.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes, or be null to query the length.
 */
size_t hlce_last_error(char *buf, size_t cap);

/**
 * Loads a panel from the canonical CSV schema; NULL on failure.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string.
 */
struct HlceDataset *hlce_dataset_load_csv(const char *path);

/**
 * Writes the panel in the canonical CSV schema.
 *
 * # Safety
 * `dataset` must be a live handle; `path` a valid NUL-terminated string.
 */
enum HlceStatus hlce_dataset_write_csv(const struct HlceDataset *dataset, const char *path);

/**
 * Number of rows; 0 for a null handle.
 *
 * # Safety
 * `dataset` must be a live handle or null.
 */
size_t hlce_dataset_rows(const struct HlceDataset *dataset);

/**
 * Covariate dimension; 0 for a null handle.
 *
 * # Safety
 * `dataset` must be a live handle or null.
 */
size_t hlce_dataset_dim(const struct HlceDataset *dataset);

/**
 * Empirical prior p(G=O); NaN for a null handle.
 *
 * # Safety
 * `dataset` must be a live handle or null.
 */
double hlce_dataset_group_prior(const struct HlceDataset *dataset);

/**
 * Copies the covariates of row `row` into `out` (length `hlce_dataset_dim`).
 *
 * # Safety
 * `dataset` must be a live handle; `out` must point to `hlce_dataset_dim`
 * writable doubles.
 */
enum HlceStatus hlce_dataset_covariates(const struct HlceDataset *dataset, size_t row, double *out);

/**
 * # Safety
 * `dataset` must come from this library and not have been freed.
 */
void hlce_dataset_free(struct HlceDataset *dataset);

/**
 * Loads a truth sidecar (`tau[,s0,s1,y0,y1]`); NULL on failure.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string.
 */
struct HlceTruth *hlce_truth_load_csv(const char *path);

/**
 * Number of truth rows.
 *
 * # Safety
 * `truth` must be a live handle or null.
 */
size_t hlce_truth_rows(const struct HlceTruth *truth);

/**
 * Copies the per-row true effects into `out` (length `hlce_truth_rows`).
 *
 * # Safety
 * `truth` must be a live handle; `out` must point to enough writable
 * doubles.
 */
enum HlceStatus hlce_truth_tau(const struct HlceTruth *truth, double *out);

/**
 * # Safety
 * `truth` must come from this library and not have been freed.
 */
void hlce_truth_free(struct HlceTruth *truth);

/**
 * Draws the closed-form synthetic panel plus truth into fresh handles.
 *
 * # Safety
 * `out_dataset` and `out_truth` must be valid writable pointers.
 */
enum HlceStatus hlce_gen_dataset1(size_t n_e,
                                  size_t n_o,
                                  uint64_t seed,
                                  struct HlceDataset **out_dataset,
                                  struct HlceTruth **out_truth);

/**
 * Draws the Gaussian-process synthetic panel plus truth.
 *
 * # Safety
 * `out_dataset` and `out_truth` must be valid writable pointers.
 */
enum HlceStatus hlce_gen_dataset2(size_t n_e,
                                  size_t n_o,
                                  uint64_t seed,
                                  struct HlceDataset **out_dataset,
                                  struct HlceTruth **out_truth);

/**
 * Fits an estimator; `folds` only matters for cross-fitting. NULL on
 * failure.
 *
 * # Safety
 * `dataset` must be a live handle.
 */
struct HlceModel *hlce_fit(const struct HlceDataset *dataset,
                           enum HlceEstimator estimator,
                           enum HlceNuisance nuisance,
                           enum HlceStage2 stage2,
                           enum HlceSplitting splitting,
                           uint32_t folds,
                           uint64_t seed);

/**
 * Predicted effect at one covariate vector of length `dim`.
 *
 * # Safety
 * `model` must be a live handle; `x` must point to `dim` readable doubles
 * and `out` to one writable double.
 */
enum HlceStatus hlce_predict(const struct HlceModel *model,
                             const double *x,
                             size_t dim,
                             double *out);

/**
 * Row-wise predictions over a row-major matrix (`rows` x `dim`).
 *
 * # Safety
 * `model` must be a live handle; `x` must point to rows*dim readable
 * doubles and `out` to `rows` writable doubles.
 */
enum HlceStatus hlce_predict_batch(const struct HlceModel *model,
                                   const double *x,
                                   size_t rows,
                                   size_t dim,
                                   double *out);

/**
 * Mean predicted effect over the rows of a row-major matrix.
 *
 * # Safety
 * `model` must be a live handle; `x` must point to rows*dim readable
 * doubles and `out` to one writable double.
 */
enum HlceStatus hlce_ate(const struct HlceModel *model,
                         const double *x,
                         size_t rows,
                         size_t dim,
                         double *out);

/**
 * # Safety
 * `model` must come from this library and not have been freed.
 */
void hlce_model_free(struct HlceModel *model);

/**
 * Root mean squared error between estimated and true effects.
 *
 * # Safety
 * `tau_hat` and `tau` must point to `len` readable doubles; `out` to one
 * writable double.
 */
enum HlceStatus hlce_pehe(const double *tau_hat, const double *tau, size_t len, double *out);

/**
 * Absolute error of the average effect (normalized by the sample size).
 *
 * # Safety
 * `tau_hat` and `tau` must point to `len` readable doubles; `out` to one
 * writable double.
 */
enum HlceStatus hlce_ate_error(const double *tau_hat, const double *tau, size_t len, double *out);

/**
 * Least-squares slope of log(err) on log(size).
 *
 * # Safety
 * `sizes` and `errs` must point to `len` readable elements; `out` to one
 * writable double.
 */
enum HlceStatus hlce_rate_slope(const size_t *sizes, const double *errs, size_t len, double *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* HLCE_H */
