#ifndef SSP_PO_H
#define SSP_PO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum SspStatus {
  SSP_STATUS_OK = 0,
  SSP_STATUS_NULL_POINTER = 1,
  SSP_STATUS_INVALID_UTF8 = 2,
  SSP_STATUS_INVALID_ARGUMENT = 3,
  SSP_STATUS_INVALID_INSTANCE = 4,
  SSP_STATUS_CONFIG = 5,
  SSP_STATUS_PARSE = 6,
  SSP_STATUS_IO = 7,
  SSP_STATUS_NO_PROPER_POLICY = 8,
  SSP_STATUS_NUMERICAL = 9,
  SSP_STATUS_PROTOCOL = 10,
  SSP_STATUS_BUFFER_TOO_SMALL = 11,
  SSP_STATUS_NOT_READY = 12,
  SSP_STATUS_PANIC = 13,
} SspStatus;

/**
 * An experiment configuration and the report of its last run.
 */
typedef struct SspPoExperiment SspPoExperiment;

/**
 * An instance together with its mean cost table.
 */
typedef struct SspPoInstance SspPoInstance;

/**
 * Parameters of an instance under its mean cost.
 */
typedef struct SspKeyParams {
  double b_star;
  double t_star;
  double t_max;
  double diameter;
} SspKeyParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *ssp_last_error(void);

/**
 * Library version as a static string.
 */
const char *ssp_version(void);

/**
 * Free a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void ssp_string_free(char *s);

/**
 * Parse an instance document (JSON).
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum SspStatus ssp_instance_from_json(const char *json, struct SspPoInstance **out);

/**
 * Random instance with `p_goal` mass on the goal in every row and costs
 * drawn from `[c_min, 1]`.
 *
 * # Safety
 * `out` must be writable.
 */
enum SspStatus ssp_instance_random(size_t num_states,
                                   size_t num_actions,
                                   double p_goal,
                                   double c_min,
                                   uint64_t seed,
                                   struct SspPoInstance **out);

/**
 * # Safety
 * `inst` must come from this library and not be freed twice.
 */
void ssp_instance_free(struct SspPoInstance *inst);

/**
 * Number of non-goal states, or 0 for a null handle.
 *
 * # Safety
 * `inst` must be null or a live handle.
 */
size_t ssp_instance_num_states(const struct SspPoInstance *inst);

/**
 * Number of actions, or 0 for a null handle.
 *
 * # Safety
 * `inst` must be null or a live handle.
 */
size_t ssp_instance_num_actions(const struct SspPoInstance *inst);

/**
 * # Safety
 * `inst` must be a live handle and `out` writable.
 */
enum SspStatus ssp_instance_key_params(const struct SspPoInstance *inst, struct SspKeyParams *out);

/**
 * Optimal values per state. `written` receives the number of states even
 * when the buffer is too small.
 *
 * # Safety
 * `inst` must be a live handle; `out` must hold `capacity` doubles.
 */
enum SspStatus ssp_instance_optimal_values(const struct SspPoInstance *inst,
                                           double *out,
                                           size_t capacity,
                                           size_t *written);

/**
 * Serialize as an instance document. Free the result with
 * [`ssp_string_free`].
 *
 * # Safety
 * `inst` must be a live handle and `out` writable.
 */
enum SspStatus ssp_instance_to_json(const struct SspPoInstance *inst, char **out);

/**
 * Parse an experiment configuration (TOML).
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be writable.
 */
enum SspStatus ssp_experiment_from_toml(const char *toml, struct SspPoExperiment **out);

/**
 * # Safety
 * `exp` must come from this library and not be freed twice.
 */
void ssp_experiment_free(struct SspPoExperiment *exp);

/**
 * Apply a `key=value` override, as on the command line.
 *
 * # Safety
 * `exp` must be a live handle; `spec` a NUL-terminated string.
 */
enum SspStatus ssp_experiment_set_override(struct SspPoExperiment *exp, const char *spec);

/**
 * Replace the learner seeds.
 *
 * # Safety
 * `exp` must be a live handle; `seeds` must hold `count` values.
 */
enum SspStatus ssp_experiment_set_seeds(struct SspPoExperiment *exp,
                                        const uint64_t *seeds,
                                        size_t count);

/**
 * Run every seed. A seed that fails mid-run keeps its completed episodes;
 * the call then returns that seed's error while the partial report stays
 * available.
 *
 * # Safety
 * `exp` must be a live handle.
 */
enum SspStatus ssp_experiment_run(struct SspPoExperiment *exp);

/**
 * Seed-mean cumulative regret after each episode of the last run.
 *
 * # Safety
 * `exp` must be a live handle; `out` must hold `capacity` doubles.
 */
enum SspStatus ssp_experiment_mean_regret(const struct SspPoExperiment *exp,
                                          double *out,
                                          size_t capacity,
                                          size_t *written);

/**
 * Write `episodes.csv`, `summary.csv` and `regret.svg` of the last run.
 *
 * # Safety
 * `exp` must be a live handle; `dir` a NUL-terminated path.
 */
enum SspStatus ssp_experiment_write(const struct SspPoExperiment *exp, const char *dir);

/**
 * Hash that identifies the configuration in output files. Free with
 * [`ssp_string_free`].
 *
 * # Safety
 * `exp` must be a live handle and `out` writable.
 */
enum SspStatus ssp_experiment_config_hash(const struct SspPoExperiment *exp, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SSP_PO_H */
