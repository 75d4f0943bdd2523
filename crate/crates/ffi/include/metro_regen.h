#ifndef METRO_REGEN_H
#define METRO_REGEN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum MrStatus {
  MR_OK = 0,
  MR_NULL_POINTER = 1,
  MR_INVALID_ARGUMENT = 2,
  MR_CONFIG = 3,
  MR_EPISODE_FINISHED = 4,
  MR_NOT_FINISHED = 5,
  MR_IO = 6,
  MR_INCOMPATIBLE = 7,
  MR_RUNTIME = 8,
  MR_PANIC = 9,
} MrStatus;

/**
 * Opaque environment handle.
 */
typedef struct MrEnv MrEnv;

/**
 * Opaque policy handle loaded from a checkpoint.
 */
typedef struct MrPolicy MrPolicy;

typedef struct MrStepResult {
  double reward;
  /**
   * Nonzero once the episode has ended.
   */
  int done;
  double sim_time_s;
} MrStepResult;

typedef struct MrLedger {
  double e_t_kwh;
  double e_b_gross_kwh;
  double e_r_kwh;
  double e_total_kwh;
  double overlap_seconds;
} MrLedger;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *mr_version(void);

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *mr_last_error_message(void);

/**
 * Creates an environment on the shipped Xiamen configuration.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum MrStatus mr_env_new_default(struct MrEnv **out);

/**
 * Creates an environment from a TOML run file or JSON config snapshot.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum MrStatus mr_env_new_from_config(const char *path, struct MrEnv **out);

/**
 * Releases an environment. Null is ignored.
 *
 * # Safety
 * `env` must come from an `mr_env_new_*` call and not be used afterwards.
 */
void mr_env_free(struct MrEnv *env);

/**
 * Length of the observation vector, or 0 for a null handle.
 *
 * # Safety
 * `env` must be null or a live handle.
 */
size_t mr_env_observation_len(const struct MrEnv *env);

/**
 * Decisions per episode, or 0 for a null handle.
 *
 * # Safety
 * `env` must be null or a live handle.
 */
size_t mr_env_episode_length(const struct MrEnv *env);

/**
 * Starts an episode. `obs_out` may be null; otherwise it must hold
 * `obs_len == mr_env_observation_len(env)` doubles.
 *
 * # Safety
 * `env` must be a live handle and `obs_out` null or valid for `obs_len` writes.
 */
enum MrStatus mr_env_reset(struct MrEnv *env, uint64_t seed, double *obs_out, size_t obs_len);

/**
 * Applies a raw action in `[-1, 1]^2` (clamped) to the deciding train.
 *
 * # Safety
 * `env` must be live, `action` must point to 2 doubles, `obs_out` null or
 * valid for `obs_len` writes, `result` null or writable.
 */
enum MrStatus mr_env_step(struct MrEnv *env,
                          const double *action,
                          double *obs_out,
                          size_t obs_len,
                          struct MrStepResult *result);

/**
 * Applies the nominal timetable command to the deciding train.
 *
 * # Safety
 * As for [`mr_env_step`], without the action pointer.
 */
enum MrStatus mr_env_step_nominal(struct MrEnv *env,
                                  double *obs_out,
                                  size_t obs_len,
                                  struct MrStepResult *result);

/**
 * Current energy ledger of the running (or finished) episode.
 *
 * # Safety
 * `env` must be live and `out` writable.
 */
enum MrStatus mr_env_ledger(const struct MrEnv *env, struct MrLedger *out);

/**
 * Runs a complete no-action episode. `total_time_s` may be null.
 *
 * # Safety
 * `env` must be live, `out` writable, `total_time_s` null or writable.
 */
enum MrStatus mr_env_run_baseline(struct MrEnv *env,
                                  uint64_t seed,
                                  struct MrLedger *out,
                                  double *total_time_s);

/**
 * Loads a policy from a training checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum MrStatus mr_policy_load(const char *path, struct MrPolicy **out);

/**
 * Releases a policy. Null is ignored.
 *
 * # Safety
 * `policy` must come from [`mr_policy_load`] and not be used afterwards.
 */
void mr_policy_free(struct MrPolicy *policy);

/**
 * Errors with `MR_INCOMPATIBLE` unless the policy was trained on `env`'s
 * configuration.
 *
 * # Safety
 * Both handles must be live.
 */
enum MrStatus mr_policy_check(const struct MrPolicy *policy, const struct MrEnv *env);

/**
 * Deterministic action (the policy mean) for one observation.
 *
 * # Safety
 * `policy` must be live, `obs` valid for `obs_len` reads, `action_out`
 * valid for 2 writes.
 */
enum MrStatus mr_policy_act(const struct MrPolicy *policy,
                            const double *obs,
                            size_t obs_len,
                            double *action_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* METRO_REGEN_H */
