#ifndef MADI_H
#define MADI_H

/* Generated by cbindgen from the madi-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum {
  MADI_STATUS_OK = 0,
  /**
   * File could not be read or written.
   */
  MADI_STATUS_IO = 1,
  /**
   * Input file or text failed to parse.
   */
  MADI_STATUS_PARSE = 2,
  /**
   * An argument was null, out of range, or otherwise invalid.
   */
  MADI_STATUS_INVALID_ARGUMENT = 3,
  /**
   * The working model could not be fitted (singular design).
   */
  MADI_STATUS_SINGULAR_MODEL = 4,
  /**
   * The sample cannot support the requested estimate.
   */
  MADI_STATUS_INSUFFICIENT_SAMPLE = 5,
  /**
   * An internal invariant failed; the library state is still sound.
   */
  MADI_STATUS_INTERNAL = 6,
} MadiStatus;

/**
 * Opaque handle to a finite population.
 */
typedef struct {
  uint8_t _private[0];
} MadiPopulation;

/**
 * Opaque handle to an A/B partition of a population.
 */
typedef struct {
  uint8_t _private[0];
} MadiPartition;

/**
 * One-shot estimate of the population total.
 */
typedef struct {
  double point;
  /**
   * Valid only when `has_variance` is nonzero.
   */
  double variance;
  /**
   * Valid only when `has_interval` is nonzero.
   */
  double ci_low;
  double ci_high;
  uint8_t has_variance;
  uint8_t has_interval;
} MadiEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing this thread's most recent error. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *madi_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *madi_version(void);

/**
 * Load a population from a `id,y,x1..xp` CSV file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 * A returned handle must be released with [`madi_population_free`].
 */
MadiStatus madi_population_load_csv(const char *path, MadiPopulation **out);

/**
 * Generate the synthetic register-like population for `(seed, n, p)`.
 *
 * # Safety
 * `out` must be a valid pointer; release the handle with
 * [`madi_population_free`].
 */
MadiStatus madi_population_synthetic(uint64_t seed, uintptr_t n, uintptr_t p, MadiPopulation **out);

/**
 * Write a population back to CSV.
 *
 * # Safety
 * `handle` must come from this library; `path` must be NUL-terminated.
 */
MadiStatus madi_population_save_csv(const MadiPopulation *handle, const char *path);

/**
 * Number of units N.
 *
 * # Safety
 * `handle` must be a live population handle (returns 0 on null).
 */
uintptr_t madi_population_size(const MadiPopulation *handle);

/**
 * Auxiliary dimension p.
 *
 * # Safety
 * `handle` must be a live population handle (returns 0 on null).
 */
uintptr_t madi_population_aux_dim(const MadiPopulation *handle);

/**
 * Population total of the study variable.
 *
 * # Safety
 * `handle` must be live and `out` a valid pointer.
 */
MadiStatus madi_population_total_y(const MadiPopulation *handle, double *out);

/**
 * Release a population handle. Null is a no-op.
 *
 * # Safety
 * `handle` must have come from this library and not be freed twice.
 */
void madi_population_free(MadiPopulation *handle);

/**
 * Load a partition (`id,delta` CSV) aligned with a population.
 *
 * # Safety
 * Pointers must be valid; release the handle with [`madi_partition_free`].
 */
MadiStatus madi_partition_load_csv(const char *path,
                                   const MadiPopulation *pop,
                                   MadiPartition **out);

/**
 * Generate a nonprobability partition for a scenario label (`sim1`,
 * `k1`..`k8`) with the given register share and seed.
 *
 * # Safety
 * Pointers must be valid; release the handle with [`madi_partition_free`].
 */
MadiStatus madi_partition_generate(const MadiPopulation *pop,
                                   const char *scenario,
                                   double fraction,
                                   uint64_t seed,
                                   MadiPartition **out);

/**
 * Number of register units N_A.
 *
 * # Safety
 * `handle` must be a live partition handle (returns 0 on null).
 */
uintptr_t madi_partition_register_size(const MadiPartition *handle);

/**
 * Release a partition handle. Null is a no-op.
 *
 * # Safety
 * `handle` must have come from this library and not be freed twice.
 */
void madi_partition_free(MadiPartition *handle);

/**
 * Draw a seeded SRS of size `n` for the strategy's frame and estimate the
 * population total, mirroring the CLI `estimate --draw` path.
 *
 * # Safety
 * `pop` must be live; `partition` may be null for the U-frame strategies;
 * `strategy` must be NUL-terminated; `out` must be valid.
 */
MadiStatus madi_estimate_total(const MadiPopulation *pop,
                               const MadiPartition *partition,
                               const char *strategy,
                               uintptr_t n,
                               uint64_t seed,
                               double level,
                               MadiEstimate *out);

/**
 * Required sample size for a target coefficient of variation.
 * `strategy` is one of `srs_u_ht`, `srs_u_greg`, `srs_b_madi_ols`,
 * `srs_b_madi_rf`; `denominator` is `yb` or `y` (model-assisted only).
 *
 * # Safety
 * Pointers must be valid; `partition` may be null for the U strategies.
 */
MadiStatus madi_required_sample_size(const MadiPopulation *pop,
                                     const MadiPartition *partition,
                                     const char *strategy,
                                     double cv_target,
                                     const char *denominator,
                                     uint64_t seed,
                                     uintptr_t *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* MADI_H */
