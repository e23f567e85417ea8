#ifndef EXPDYN_H
#define EXPDYN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ExpdynStatus {
  EXPDYN_STATUS_OK = 0,
  EXPDYN_STATUS_INVALID_ARGUMENT = 1,
  EXPDYN_STATUS_NUMERIC_FAILURE = 2,
  EXPDYN_STATUS_NULL_POINTER = 3,
  EXPDYN_STATUS_PANIC = 4,
} ExpdynStatus;

typedef enum ExpdynVerdict {
  EXPDYN_VERDICT_HYPERBOLIC = 0,
  EXPDYN_VERDICT_ESCAPE_SUSPECT = 1,
  EXPDYN_VERDICT_UNDECIDED = 2,
} ExpdynVerdict;

// Result of classifying one parameter.
typedef struct ExpdynClassification ExpdynClassification;

// Per-radius tallies of a density sweep.
typedef struct ExpdynDensityReport ExpdynDensityReport;

// A certified Misiurewicz parameter.
typedef struct ExpdynMisiurewicz ExpdynMisiurewicz;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next call into the library on the same thread.
const char *expdyn_last_error(void);

// # Safety
// `s` must be null or a string returned by this library, not yet freed.
void expdyn_string_free(char *s);

// Classifies `λ = re + i·im` with an iteration `budget` and maximal period
// `p_max`. Non-hyperbolic verdicts still succeed; inspect the verdict.
//
// # Safety
// `out` must be valid for writes.
enum ExpdynStatus expdyn_classify(double re,
                                  double im,
                                  size_t budget,
                                  size_t p_max,
                                  struct ExpdynClassification **out);

// # Safety
// `h` must be a live handle; `verdict` and `period` must be valid for
// writes. `period` receives 0 unless the verdict is hyperbolic.
enum ExpdynStatus expdyn_classification_verdict(const struct ExpdynClassification *h,
                                                enum ExpdynVerdict *verdict,
                                                size_t *period);

// JSON form of the classification, certificate included.
//
// # Safety
// `h` must be a live handle and `out` valid for writes.
enum ExpdynStatus expdyn_classification_json(const struct ExpdynClassification *h, char **out);

// # Safety
// `h` must be null or a live handle; it is invalid afterwards.
void expdyn_classification_free(struct ExpdynClassification *h);

// Solves `ξ_{k+p}(λ) = ξ_k(λ)` by Newton from `seed` and certifies the
// solution.
//
// # Safety
// `out` must be valid for writes.
enum ExpdynStatus expdyn_misiurewicz_solve(double seed_re,
                                           double seed_im,
                                           size_t preperiod,
                                           size_t period,
                                           double tol,
                                           struct ExpdynMisiurewicz **out);

// # Safety
// `h` must be a live handle; `re` and `im` must be valid for writes.
enum ExpdynStatus expdyn_misiurewicz_lambda(const struct ExpdynMisiurewicz *h,
                                            double *re,
                                            double *im);

// # Safety
// `h` must be a live handle and `out` valid for writes.
enum ExpdynStatus expdyn_misiurewicz_json(const struct ExpdynMisiurewicz *h, char **out);

// # Safety
// `h` must be null or a live handle; it is invalid afterwards.
void expdyn_misiurewicz_free(struct ExpdynMisiurewicz *h);

// Classifies `samples` uniform points in each disk `|λ - center| < r` for the
// `n_radii` strictly decreasing radii. Deterministic in `seed`.
//
// # Safety
// `radii` must point to `n_radii` readable doubles; `out` must be valid for
// writes.
enum ExpdynStatus expdyn_density_sweep(double center_re,
                                       double center_im,
                                       const double *radii,
                                       size_t n_radii,
                                       size_t samples,
                                       uint64_t seed,
                                       size_t budget,
                                       size_t p_max,
                                       struct ExpdynDensityReport **out);

// Number of radii in the report, or 0 for a null handle.
//
// # Safety
// `h` must be null or a live handle.
size_t expdyn_density_len(const struct ExpdynDensityReport *h);

// Certified-hyperbolic count and Wilson 95% interval for radius index `i`.
//
// # Safety
// `h` must be a live handle; all out pointers must be valid for writes.
enum ExpdynStatus expdyn_density_row(const struct ExpdynDensityReport *h,
                                     size_t i,
                                     size_t *hyperbolic,
                                     double *fraction,
                                     double *wilson_lo,
                                     double *wilson_hi);

// # Safety
// `h` must be a live handle and `out` valid for writes.
enum ExpdynStatus expdyn_density_json(const struct ExpdynDensityReport *h, char **out);

// # Safety
// `h` must be null or a live handle; it is invalid afterwards.
void expdyn_density_free(struct ExpdynDensityReport *h);

// Library version as a static string.
const char *expdyn_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EXPDYN_H */
