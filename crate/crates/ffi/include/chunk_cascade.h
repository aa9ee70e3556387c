#ifndef CHUNK_CASCADE_H
#define CHUNK_CASCADE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CcStatus {
  CC_STATUS_OK = 0,
  CC_STATUS_NULL_POINTER = 1,
  CC_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A chunk could not be read or the store is malformed.
   */
  CC_STATUS_DATA_ERROR = 3,
  CC_STATUS_IO = 4,
  /**
   * A Rust panic was caught at the boundary.
   */
  CC_STATUS_PANIC = 5,
  /**
   * A caller-supplied buffer is too small.
   */
  CC_STATUS_BUFFER_TOO_SMALL = 6,
} CcStatus;

/**
 * A cascade model: prevalence, dimension and per-level detector rates.
 */
typedef struct CcModel CcModel;

/**
 * Chunk-grid geometry.
 */
typedef struct CcPyramid CcPyramid;

/**
 * The result of a single-level or cascade run.
 */
typedef struct CcReport CcReport;

typedef struct CcMetrics {
  double tpr;
  double fpr;
  double precision;
  /**
   * 0 when precision is undefined (nothing predicted positive).
   */
  uint8_t precision_defined;
} CcMetrics;

typedef struct CcEstimate {
  double mean;
  double std_error;
  /**
   * 0 when the estimate's denominator never occurred.
   */
  uint8_t defined;
} CcEstimate;

typedef struct CcSimSummary {
  uint64_t trials;
  struct CcEstimate tpr;
  struct CcEstimate fpr;
  struct CcEstimate precision;
} CcSimSummary;

/**
 * Decides one chunk. Returns nonzero for positive.
 */
typedef uint8_t (*CcClassifyFn)(void *user, size_t level, size_t linear_index);

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * The message of the last failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *cc_last_error(void);

/**
 * Builds a model. `tpr` and `fpr` hold `levels` rates each, level 0 first.
 *
 * # Safety
 * `tpr` and `fpr` must point to `levels` readable doubles; `out` must be
 * writable.
 */
enum CcStatus cc_model_new(size_t dim,
                           double prevalence,
                           const double *tpr,
                           const double *fpr,
                           size_t levels,
                           struct CcModel **out);

/**
 * # Safety
 * `model` must be null or a handle from [`cc_model_new`] not yet freed.
 */
void cc_model_free(struct CcModel *model);

/**
 * Closed-form cascade metrics. `calls` receives the expected classifier
 * calls per level-0 chunk for each level, level 0 first; `calls_len` must
 * be at least the number of levels.
 *
 * # Safety
 * `model` must be a live handle; `out` writable; `calls` writable for
 * `calls_len` doubles.
 */
enum CcStatus cc_model_metrics(const struct CcModel *model,
                               struct CcMetrics *out,
                               double *calls,
                               size_t calls_len);

/**
 * Metrics of a lone level-0 detector, for comparison.
 *
 * # Safety
 * `out` must be writable.
 */
enum CcStatus cc_single_level_metrics(double tpr,
                                      double fpr,
                                      double prevalence,
                                      struct CcMetrics *out);

/**
 * Builds a pyramid with `dim` axes of `l0_chunks_per_axis[i]` level-0
 * chunks each.
 *
 * # Safety
 * `l0_chunks_per_axis` must point to `dim` readable values; `out` must be
 * writable.
 */
enum CcStatus cc_pyramid_new(size_t dim,
                             size_t levels,
                             const size_t *l0_chunks_per_axis,
                             struct CcPyramid **out);

/**
 * # Safety
 * `pyramid` must be null or a handle from [`cc_pyramid_new`] not yet freed.
 */
void cc_pyramid_free(struct CcPyramid *pyramid);

/**
 * # Safety
 * `pyramid` must be a live handle and `out` writable.
 */
enum CcStatus cc_pyramid_chunk_count(const struct CcPyramid *pyramid, size_t level, size_t *out);

/**
 * Monte Carlo estimates of the model's metrics on `pyramid`. `calls`
 * receives per-level call estimates per level-0 chunk. Results do not
 * depend on `parallel`.
 *
 * # Safety
 * Handles must be live; `out` writable; `calls` writable for `calls_len`
 * estimates.
 */
enum CcStatus cc_simulate(const struct CcModel *model,
                          const struct CcPyramid *pyramid,
                          uint64_t trials,
                          uint64_t seed,
                          uint8_t parallel,
                          struct CcSimSummary *out,
                          struct CcEstimate *calls,
                          size_t calls_len);

/**
 * Runs the cascade over `pyramid`, calling `classify(user, level, index)`
 * for each visited chunk, top level first. With `single_level` nonzero
 * only level 0 is classified, exhaustively. Callbacks happen on the
 * calling thread.
 *
 * # Safety
 * `pyramid` must be a live handle, `classify` a valid function, `out`
 * writable. `user` is passed through untouched.
 */
enum CcStatus cc_run(const struct CcPyramid *pyramid,
                     CcClassifyFn classify,
                     void *user,
                     uint8_t single_level,
                     struct CcReport **out);

/**
 * # Safety
 * `report` must be null or a handle from [`cc_run`] not yet freed.
 */
void cc_report_free(struct CcReport *report);

/**
 * Classifier calls at `level`, or 0 for an out-of-range level.
 *
 * # Safety
 * `report` must be a live handle.
 */
uint64_t cc_report_calls(const struct CcReport *report, size_t level);

/**
 * Positive classifier outputs at `level`, or 0 for an out-of-range level.
 *
 * # Safety
 * `report` must be a live handle.
 */
uint64_t cc_report_positives(const struct CcReport *report, size_t level);

/**
 * Copies the final level-0 predictions (0 or 1 per chunk, by linear
 * index) into `out`.
 *
 * # Safety
 * `report` must be a live handle; `out` writable for `len` bytes.
 */
enum CcStatus cc_report_predictions(const struct CcReport *report, uint8_t *out, size_t len);

/**
 * Writes the `L1:L0`-style call string, NUL-terminated, into `buf`.
 * `needed`, if not null, receives the size required including the NUL.
 *
 * # Safety
 * `report` must be a live handle; `buf` writable for `len` bytes (may be
 * null when `len` is 0).
 */
enum CcStatus cc_report_call_string(const struct CcReport *report,
                                    char *buf,
                                    size_t len,
                                    size_t *needed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHUNK_CASCADE_H */
