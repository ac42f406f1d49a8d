#ifndef TRANSDIR_H
#define TRANSDIR_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum TdStatus {
  TD_STATUS_OK = 0,
  TD_STATUS_NULL_POINTER = 1,
  TD_STATUS_INVALID_ARGUMENT = 2,
  TD_STATUS_INVALID_SCORES = 3,
  TD_STATUS_EMPTY_DOCUMENT = 4,
  TD_STATUS_TOO_FEW_SEGMENTS = 5,
  TD_STATUS_TOO_MANY_SEGMENTS = 6,
  TD_STATUS_NOT_FOUND = 7,
  TD_STATUS_IO = 8,
  TD_STATUS_BUFFER_TOO_SMALL = 9,
  TD_STATUS_PANIC = 99,
} TdStatus;

typedef enum TdDirection {
  TD_DIRECTION_X2Y = 0,
  TD_DIRECTION_Y2X = 1,
} TdDirection;

/**
 * Per-segment scores of one document, in push order.
 */
typedef struct TdDocument TdDocument;

/**
 * A loaded score file.
 */
typedef struct TdScoreStore TdScoreStore;

typedef struct TdVerdict {
  enum TdDirection predicted;
  bool tie;
  /**
   * log P_tok(y|x) - log P_tok(x|y).
   */
  double log_margin;
  double prob_ratio;
} TdVerdict;

typedef struct TdPValue {
  double observed_stat;
  double p_value;
  uint64_t n_permutations;
  uint64_t extreme_count;
  /**
   * True for full enumeration, false for Monte Carlo.
   */
  bool exhaustive;
} TdPValue;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message. Returns null when the
 * last call succeeded. Release the result with [`td_string_free`].
 */
char *td_last_error_message(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed at most once.
 */
void td_string_free(char *s);

/**
 * Library version as a static string.
 */
const char *td_version(void);

/**
 * Average token log-probability of one scored sequence.
 *
 * # Safety
 * `logprobs` must point to `len` doubles and `out` to a writable double.
 */
enum TdStatus td_avg_token_logprob(const double *logprobs_ptr, size_t len, double *out);

/**
 * Sentence-level verdict from the token log-probabilities of y given x
 * and of x given y.
 *
 * # Safety
 * `xy` and `yx` must point to `n_xy` and `n_yx` doubles; `out` must be writable.
 */
enum TdStatus td_detect_sentence(const double *xy,
                                 size_t n_xy,
                                 const double *yx,
                                 size_t n_yx,
                                 struct TdVerdict *out);

/**
 * |acc_xy - acc_yx| for accuracies in [0, 1].
 *
 * # Safety
 * `out` must be writable.
 */
enum TdStatus td_directional_bias(double acc_xy, double acc_yx, double *out);

/**
 * New empty document. Never returns null.
 */
struct TdDocument *td_document_new(void);

/**
 * # Safety
 * `doc` must be null or a handle from [`td_document_new`], freed at most once.
 */
void td_document_free(struct TdDocument *doc);

/**
 * Appends one segment from its token log-probabilities in both directions.
 *
 * # Safety
 * `doc` must be a live handle; `xy` and `yx` must point to `n_xy` and `n_yx` doubles.
 */
enum TdStatus td_document_push(struct TdDocument *doc,
                               const double *xy,
                               size_t n_xy,
                               const double *yx,
                               size_t n_yx);

/**
 * Appends one segment from precomputed sums and token counts.
 *
 * # Safety
 * `doc` must be a live handle.
 */
enum TdStatus td_document_push_sums(struct TdDocument *doc,
                                    double sum_xy,
                                    size_t count_xy,
                                    double sum_yx,
                                    size_t count_yx);

/**
 * # Safety
 * `doc` must be a live handle or null; `out` must be writable.
 */
enum TdStatus td_document_len(const struct TdDocument *doc, size_t *out);

/**
 * Document verdict from token-weighted pooled averages.
 *
 * # Safety
 * `doc` must be a live handle; `out` must be writable.
 */
enum TdStatus td_document_detect(const struct TdDocument *doc, struct TdVerdict *out);

/**
 * Monte Carlo swap-permutation test, reproducible for a given seed.
 *
 * # Safety
 * `doc` must be a live handle; `out` must be writable.
 */
enum TdStatus td_document_permutation_test(const struct TdDocument *doc,
                                           uint64_t n_permutations,
                                           uint64_t seed,
                                           bool small_sample_correction,
                                           struct TdPValue *out);

/**
 * Exhaustive permutation test over all 2^n swap subsets.
 *
 * # Safety
 * `doc` must be a live handle; `out` must be writable.
 */
enum TdStatus td_document_exact_test(const struct TdDocument *doc,
                                     size_t max_segments,
                                     struct TdPValue *out);

/**
 * Loads a newline-delimited JSON score file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable. On
 * success `*out` owns a handle to release with [`td_score_store_free`].
 */
enum TdStatus td_score_store_load(const char *path, struct TdScoreStore **out);

/**
 * # Safety
 * `store` must be null or a handle from [`td_score_store_load`], freed at most once.
 */
void td_score_store_free(struct TdScoreStore *store);

/**
 * # Safety
 * `store` must be a live handle; `out` must be writable.
 */
enum TdStatus td_score_store_len(const struct TdScoreStore *store, size_t *out);

/**
 * Copies the token log-probabilities of `target` given `source` into
 * `buf`. `*len` receives the token count; when it exceeds `capacity`
 * nothing is copied and `TD_STATUS_BUFFER_TOO_SMALL` is returned, so a
 * call with `capacity` 0 queries the size.
 *
 * # Safety
 * Strings must be NUL-terminated; `buf` must hold `capacity` doubles (it may
 * be null when `capacity` is 0); `len` must be writable.
 */
enum TdStatus td_score_store_lookup(const struct TdScoreStore *store,
                                    const char *scorer_id,
                                    const char *src_lang,
                                    const char *tgt_lang,
                                    const char *source,
                                    const char *target,
                                    double *buf,
                                    size_t capacity,
                                    size_t *len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRANSDIR_H */
