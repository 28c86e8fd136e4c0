#ifndef SOFICRANK_H
#define SOFICRANK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every fallible call.
 */
typedef enum SrStatus {
  SR_STATUS_OK = 0,
  SR_STATUS_NULL_POINTER = 1,
  SR_STATUS_INVALID_UTF8 = 2,
  /**
   * Invalid input: parse errors, bad parameters, mismatched groups.
   */
  SR_STATUS_INVALID = 3,
  /**
   * A memory budget or size guard was exceeded.
   */
  SR_STATUS_BUDGET = 4,
  /**
   * Numerical or I/O failure.
   */
  SR_STATUS_INTERNAL = 5,
  SR_STATUS_PANIC = 6,
} SrStatus;

/**
 * A finitely generated group.
 */
typedef struct SrGroup SrGroup;

/**
 * A list of sofic approximation levels of one group.
 */
typedef struct SrLevels SrLevels;

/**
 * A matrix over the integral group ring.
 */
typedef struct SrMatrix SrMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last error on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *sr_last_error(void);

/**
 * Library version as a static string.
 */
const char *sr_version(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` is null or a string returned through an out-parameter of this
 * library that has not been freed.
 */
void sr_string_free(char *s);

/**
 * `Z^d` with generators `x, y, z, w` (or `x1..xd`).
 *
 * # Safety
 * `out` is a valid pointer to writable storage.
 */
enum SrStatus sr_group_new_free_abelian(uintptr_t rank, struct SrGroup **out);

/**
 * The free group `F_r` with generators `a, b, c, d` (or `a1..ar`).
 *
 * # Safety
 * `out` is a valid pointer to writable storage.
 */
enum SrStatus sr_group_new_free(uintptr_t rank, struct SrGroup **out);

/**
 * # Safety
 * `g` is null or a handle from `sr_group_new_*` not yet freed.
 */
void sr_group_destroy(struct SrGroup *g);

/**
 * Congruence quotients `(Z/N)^d` of a free abelian group, one per size.
 *
 * # Safety
 * `group` is a live handle, `sizes` points to `len` values and `out` is
 * writable.
 */
enum SrStatus sr_levels_congruence(const struct SrGroup *group,
                                   const uintptr_t *sizes,
                                   uintptr_t len,
                                   struct SrLevels **out);

/**
 * Seeded transitive permutation actions of a free group, one per degree.
 *
 * # Safety
 * `group` is a live handle, `degrees` points to `len` values and `out` is
 * writable.
 */
enum SrStatus sr_levels_random_transitive(const struct SrGroup *group,
                                          const uintptr_t *degrees,
                                          uintptr_t len,
                                          uint64_t seed,
                                          struct SrLevels **out);

/**
 * Number of levels in a handle (0 for null).
 *
 * # Safety
 * `levels` is null or a live handle.
 */
uintptr_t sr_levels_len(const struct SrLevels *levels);

/**
 * # Safety
 * `l` is null or a handle from `sr_levels_*` not yet freed.
 */
void sr_levels_destroy(struct SrLevels *l);

/**
 * Parses a matrix given as `rows * cols` element strings in row-major
 * order, e.g. `"x - 1"`.
 *
 * # Safety
 * `group` is a live handle, `entries` points to `rows * cols` strings and
 * `out` is writable.
 */
enum SrStatus sr_matrix_parse(const struct SrGroup *group,
                              const char *const *entries,
                              uintptr_t rows,
                              uintptr_t cols,
                              struct SrMatrix **out);

/**
 * # Safety
 * `m` is null or a handle from `sr_matrix_parse` not yet freed.
 */
void sr_matrix_destroy(struct SrMatrix *m);

/**
 * Exact `tr((f* f)^k)` as a decimal string.
 *
 * # Safety
 * `f` is a live handle and `out` is writable.
 */
enum SrStatus sr_trace_moment(const struct SrMatrix *f, uint32_t k, char **out);

/**
 * `d_{η,i}` of `σ_i(f)` at `n` thresholds, written to `values`.
 *
 * # Safety
 * `levels` and `f` are live handles, `etas` points to `n` values and
 * `values` to `n` writable values.
 */
enum SrStatus sr_counting_function(const struct SrLevels *levels,
                                   uintptr_t level_index,
                                   const struct SrMatrix *f,
                                   const double *etas,
                                   uintptr_t n,
                                   double *values);

/**
 * Estimate of `dim ker ρ(f)` with thresholds `2^{-j}`, `j ≤ eta_depth`,
 * plus `η = 0`.
 *
 * # Safety
 * `levels` and `f` are live handles and `estimate` is writable.
 */
enum SrStatus sr_vnd_estimate(const struct SrLevels *levels,
                              const struct SrMatrix *f,
                              uint32_t eta_depth,
                              uintptr_t tail,
                              double *estimate);

/**
 * Estimate of `vr(Z(Γ)^n / B)` where the rows of `relators` generate `B`.
 * With `integer_rank` the kernel is counted by exact modular rank.
 *
 * # Safety
 * `levels` and `relators` are live handles and `estimate` is writable.
 */
enum SrStatus sr_vr_estimate(const struct SrLevels *levels,
                             const struct SrMatrix *relators,
                             bool integer_rank,
                             uintptr_t tail,
                             double *estimate);

/**
 * Lower and upper covering exponents `log S_ε / (d log(1/ε))` implied by
 * a counting value `d_η`.
 *
 * # Safety
 * `lower` and `upper` are writable.
 */
enum SrStatus sr_covering_sandwich(double d_eta, double eps, double *lower, double *upper);

/**
 * Runs a TOML job for a command (`"vr"`, `"vnd"`, `"spectrum"`,
 * `"moments"`, `"mdim"`, `"tile"`, `"demo-additivity"`) and returns the
 * JSON report.
 *
 * # Safety
 * `job_toml` and `command` are nul-terminated strings and `out_json` is
 * writable.
 */
enum SrStatus sr_run_job(const char *job_toml, const char *command, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SOFICRANK_H */
