#ifndef IECSI_H
#define IECSI_H

/* Generated by cbindgen. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum IecsiStatus {
  IECSI_STATUS_OK = 0,
  IECSI_STATUS_NULL_ARGUMENT = 1,
  IECSI_STATUS_INVALID_UTF8 = 2,
  IECSI_STATUS_INVALID_ARGUMENT = 3,
  IECSI_STATUS_PARSE = 4,
  IECSI_STATUS_VALIDATION = 5,
  IECSI_STATUS_IO = 6,
  IECSI_STATUS_GATE_FAILED = 7,
  IECSI_STATUS_UNDEFINED = 8,
  IECSI_STATUS_INSUFFICIENT_DATA = 9,
  IECSI_STATUS_PANIC = 10,
} IecsiStatus;

typedef enum IecsiFormat {
  IECSI_FORMAT_STRUCTURED = 0,
  IECSI_FORMAT_MARKDOWN = 1,
} IecsiFormat;

typedef enum IecsiSentiment {
  IECSI_SENTIMENT_NEGATIVE = -1,
  IECSI_SENTIMENT_NEUTRAL = 0,
  IECSI_SENTIMENT_POSITIVE = 1,
} IecsiSentiment;

// Opaque handle to a loaded study.
typedef struct IecsiStudy IecsiStudy;

// Analysis settings. Obtain defaults from [`iecsi_config_default`].
typedef struct IecsiConfig {
  double alpha;
  double kappa_threshold;
  int32_t scale_min;
  int32_t scale_max;
  double neutral_lower;
  double neutral_upper;
  uint32_t exact_test_cutoff;
} IecsiConfig;

// Result of a significance test. `df` and `effect_size` are NaN when not
// applicable.
typedef struct IecsiTestResult {
  double statistic;
  double p_value;
  double df;
  double effect_size;
  bool significant;
  bool exact;
} IecsiTestResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *iecsi_version(void);

// Message of the last failed call on this thread, or NULL. The pointer is
// valid until the next call into the library on the same thread.
const char *iecsi_last_error(void);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not have been freed already.
void iecsi_string_free(char *s);

// Writes the default analysis configuration into `out`.
//
// # Safety
// `out` must be valid for writes.
enum IecsiStatus iecsi_config_default(struct IecsiConfig *out);

// Reads the study bundle in directory `dir`. Cross-record invariants are
// checked by [`iecsi_study_validate`] and again before analysis.
//
// # Safety
// `dir` must be a NUL-terminated string; `out` must be valid for writes.
enum IecsiStatus iecsi_study_load(const char *dir, struct IecsiStudy **out);

// Releases a study handle. NULL is ignored.
//
// # Safety
// `study` must come from [`iecsi_study_load`] and not have been freed.
void iecsi_study_free(struct IecsiStudy *study);

// Number of sessions in the study.
//
// # Safety
// `study` must be a live handle; `out` must be valid for writes.
enum IecsiStatus iecsi_study_session_count(const struct IecsiStudy *study, uintptr_t *out);

// Writes the study's validation violations as a JSON document to `out`
// (an empty `violations` list when valid). Free with [`iecsi_string_free`].
//
// # Safety
// `study` must be a live handle; `out` must be valid for writes.
enum IecsiStatus iecsi_study_validate(const struct IecsiStudy *study, char **out);

// Runs the full analysis and renders it. `*out` is NULL on failure. Free the result with
// [`iecsi_string_free`].
//
// # Safety
// `study` must be a live handle; `out` must be valid for writes.
enum IecsiStatus iecsi_study_analyze(const struct IecsiStudy *study,
                                     enum IecsiFormat format,
                                     char **out);

// Sentiment of a mean under `config` (defaults when NULL).
//
// # Safety
// `config` must be NULL or valid; `out` must be valid for writes.
enum IecsiStatus iecsi_annotate_mean(double mean,
                                     const struct IecsiConfig *config,
                                     enum IecsiSentiment *out);

// Unweighted Cohen's kappa between two aligned category arrays of length `n`.
//
// # Safety
// `a` and `b` must point to `n` readable values; `out` must be valid for writes.
enum IecsiStatus iecsi_cohen_kappa(const int32_t *a, const int32_t *b, uintptr_t n, double *out);

// Knowledge-gain rule on post-minus-pre deltas.
//
// # Safety
// `out` must be valid for writes.
enum IecsiStatus iecsi_classify_gain(double delta_dqual,
                                     double delta_dintrp,
                                     double delta_dcrit,
                                     bool *out);

// Paired t-test on `x - y`.
//
// # Safety
// `x` and `y` must point to `n` readable values; `out` must be valid for writes.
enum IecsiStatus iecsi_paired_t_test(const double *x,
                                     const double *y,
                                     uintptr_t n,
                                     double alpha,
                                     struct IecsiTestResult *out);

// Wilcoxon signed-rank test on `x - y`.
//
// # Safety
// `x` and `y` must point to `n` readable values; `config` must be NULL or
// valid; `out` must be valid for writes.
enum IecsiStatus iecsi_wilcoxon_signed_rank(const double *x,
                                            const double *y,
                                            uintptr_t n,
                                            const struct IecsiConfig *config,
                                            struct IecsiTestResult *out);

// One-sample t-test against benchmark mean `mu`.
//
// # Safety
// `x` must point to `n` readable values; `out` must be valid for writes.
enum IecsiStatus iecsi_one_sample_t_test(const double *x,
                                         uintptr_t n,
                                         double mu,
                                         double alpha,
                                         struct IecsiTestResult *out);

// Welch t-test of a sample against reference summary statistics.
//
// # Safety
// `x` must point to `n` readable values; `out` must be valid for writes.
enum IecsiStatus iecsi_welch_t_test(const double *x,
                                    uintptr_t n,
                                    double ref_mean,
                                    double ref_sd,
                                    uintptr_t ref_n,
                                    double alpha,
                                    struct IecsiTestResult *out);

// Mann-Whitney U test of `x` against `y`.
//
// # Safety
// `x` and `y` must point to `nx` and `ny` readable values; `config` must be
// NULL or valid; `out` must be valid for writes.
enum IecsiStatus iecsi_mann_whitney_u(const double *x,
                                      uintptr_t nx,
                                      const double *y,
                                      uintptr_t ny,
                                      const struct IecsiConfig *config,
                                      struct IecsiTestResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IECSI_H */
