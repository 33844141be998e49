#ifndef STEPNAV_H
#define STEPNAV_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum StepnavStatus {
  STEPNAV_STATUS_OK = 0,
  STEPNAV_STATUS_NULL_POINTER = 1,
  STEPNAV_STATUS_INVALID_ARGUMENT = 2,
  STEPNAV_STATUS_INVALID_CONFIG = 3,
  STEPNAV_STATUS_PARSE = 4,
  STEPNAV_STATUS_IO = 5,
  STEPNAV_STATUS_FILTER_DIVERGENCE = 6,
  STEPNAV_STATUS_VALIDATION = 7,
  STEPNAV_STATUS_PANIC = 8,
} StepnavStatus;

/**
 * Trained step-size classifier handle.
 */
typedef struct StepnavModel StepnavModel;

/**
 * Scenario configuration handle.
 */
typedef struct StepnavScenario StepnavScenario;

/**
 * Accuracy and cost of one run.
 */
typedef struct StepnavMetrics {
  double mean_speed_error_mps;
  double max_speed_error_mps;
  double rms_speed_error_mps;
  double iterations;
  double duration_s;
} StepnavMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *stepnav_version(void);

/**
 * Length in bytes of the last error message on this thread, 0 if none.
 */
size_t stepnav_last_error_length(void);

/**
 * Copy the last error message (NUL-terminated, truncated to `len - 1`
 * bytes) into `buf`. Returns the number of bytes written, excluding NUL.
 *
 * # Safety
 * `buf` must point to at least `len` writable bytes.
 */
size_t stepnav_last_error_message(char *buf, size_t len);

/**
 * Parse a scenario from TOML text.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be writable.
 */
enum StepnavStatus stepnav_scenario_from_toml(const char *toml, struct StepnavScenario **out);

/**
 * Built-in scenario by name (`sensitivity_gnss`, `adaptive_gnss`, `adaptive_dvl`,
 * `field_gnss`).
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
enum StepnavStatus stepnav_scenario_preset(const char *name, struct StepnavScenario **out);

/**
 * Override the master seed.
 *
 * # Safety
 * `scenario` must be a live handle or null.
 */
enum StepnavStatus stepnav_scenario_set_seed(struct StepnavScenario *scenario, uint64_t seed);

/**
 * # Safety
 * `scenario` must come from this library and not be used afterwards.
 */
void stepnav_scenario_free(struct StepnavScenario *scenario);

/**
 * Load a trained model from its JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum StepnavStatus stepnav_model_from_json(const char *json, struct StepnavModel **out);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void stepnav_model_free(struct StepnavModel *model);

/**
 * Predict a step size from `n` raw feature values.
 *
 * # Safety
 * `features` must point to `n` doubles; `dt_s` and `score` must be writable
 * (`score` may be null).
 */
enum StepnavStatus stepnav_model_predict(const struct StepnavModel *model,
                                         const double *features,
                                         size_t n,
                                         double *dt_s,
                                         double *score);

/**
 * Run the scenario (Monte-Carlo run 0) at a fixed step size.
 *
 * # Safety
 * `scenario` must be a live handle; `out` must be writable.
 */
enum StepnavStatus stepnav_run_fixed(const struct StepnavScenario *scenario,
                                     double dt_s,
                                     struct StepnavMetrics *out);

/**
 * Run the scenario under the learned step-size policy.
 *
 * # Safety
 * `scenario` and `model` must be live handles; `out` must be writable.
 */
enum StepnavStatus stepnav_run_adaptive(const struct StepnavScenario *scenario,
                                        const struct StepnavModel *model,
                                        double initial_dt_s,
                                        bool hysteresis,
                                        struct StepnavMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STEPNAV_H */
