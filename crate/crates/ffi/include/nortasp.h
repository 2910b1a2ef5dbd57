#ifndef NORTASP_H
#define NORTASP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. Values 2 to 4 match the CLI exit codes.
 */
typedef enum NspStatus {
  NSP_STATUS_OK = 0,
  NSP_STATUS_INVALID_INPUT = 2,
  NSP_STATUS_NUMERICAL = 3,
  NSP_STATUS_RESOURCE = 4,
  NSP_STATUS_NULL_POINTER = 5,
  NSP_STATUS_BUFFER_TOO_SMALL = 6,
  NSP_STATUS_PANIC = 7,
} NspStatus;

/**
 * Fitted NORTA model.
 */
typedef struct NspModel NspModel;

/**
 * Grid plus training scenarios.
 */
typedef struct NspProblem NspProblem;

/**
 * Out-of-sample shed statistics for one plan.
 */
typedef struct NspSummary {
  double mean;
  double std;
  double min;
  double q25;
  double q50;
  double q75;
  double max;
  /**
   * First-stage cost plus mean shed.
   */
  double v_oos;
} NspSummary;

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *nsp_last_error(void);

/**
 * Library version as a static string.
 */
const char *nsp_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void nsp_string_free(char *s);

/**
 * Fits a model to `k` scenarios of `n` heights, row-major.
 *
 * # Safety
 * `heights` must point to `k * n` values; `out` must be writable.
 */
enum NspStatus nsp_model_fit(const uint32_t *heights, size_t k, size_t n, struct NspModel **out);

/**
 * # Safety
 * `model` must be a live handle.
 */
size_t nsp_model_dim(const struct NspModel *model);

/**
 * Draws `m` scenarios into `out` (row-major, `m * dim` values).
 *
 * # Safety
 * `model` must be a live handle and `out` must hold `out_len` values.
 */
enum NspStatus nsp_model_sample(const struct NspModel *model,
                                size_t m,
                                uint64_t seed,
                                uint32_t *out,
                                size_t out_len);

/**
 * Serializes the model as JSON; free the string with `nsp_string_free`.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum NspStatus nsp_model_to_json(const struct NspModel *model, char **out);

/**
 * # Safety
 * `json` must be a nul-terminated string; `out` must be writable.
 */
enum NspStatus nsp_model_from_json(const char *json, struct NspModel **out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void nsp_model_free(struct NspModel *model);

/**
 * Earth mover's distance between two samples' empirical distributions.
 *
 * # Safety
 * `a` and `b` must hold `na` and `nb` values; `out` must be writable.
 */
enum NspStatus nsp_emd(const double *a, size_t na, const double *b, size_t nb, double *out);

/**
 * Loads a grid JSON file and a scenario CSV file.
 *
 * # Safety
 * Paths must be nul-terminated strings; `out` must be writable.
 */
enum NspStatus nsp_problem_load(const char *grid_path,
                                const char *scenarios_path,
                                struct NspProblem **out);

/**
 * Number of flooded substations, the length of every height vector.
 *
 * # Safety
 * `problem` must be a live handle.
 */
size_t nsp_problem_n_flooded(const struct NspProblem *problem);

/**
 * Exact first-stage optimum for `budget`; writes heights and SAA value.
 *
 * # Safety
 * `heights_out` must hold `len` values; `value_out` must be writable.
 */
enum NspStatus nsp_problem_solve(const struct NspProblem *problem,
                                 double budget,
                                 uint32_t *heights_out,
                                 size_t len,
                                 double *value_out);

/**
 * SAA objective of a height vector over the training scenarios.
 *
 * # Safety
 * `heights` must hold `len` values; `out` must be writable.
 */
enum NspStatus nsp_problem_saa(const struct NspProblem *problem,
                               const uint32_t *heights,
                               size_t len,
                               double *out);

/**
 * Evaluates a plan on `m` synthetic scenarios (row-major, `m * len`
 * values, columns in flooded-substation order).
 *
 * # Safety
 * Pointers must hold the stated number of values; `out` must be writable.
 */
enum NspStatus nsp_problem_evaluate(const struct NspProblem *problem,
                                    const uint32_t *heights,
                                    size_t len,
                                    const uint32_t *synthetic,
                                    size_t m,
                                    struct NspSummary *out);

/**
 * # Safety
 * `problem` must be null or a handle not yet freed.
 */
void nsp_problem_free(struct NspProblem *problem);

#endif  /* NORTASP_H */
