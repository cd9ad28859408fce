#ifndef MQI_H
#define MQI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum MqiStatus {
  MQI_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  MQI_STATUS_NULL_POINTER = 1,
  /**
   * An argument was malformed: invalid UTF-8, unknown name, wrong length.
   */
  MQI_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The scenario or configuration was rejected.
   */
  MQI_STATUS_CONFIG = 3,
  /**
   * The requested value is not available, e.g. a metric of a failed fit.
   */
  MQI_STATUS_MISSING = 4,
  /**
   * The computation or an I/O operation failed.
   */
  MQI_STATUS_RUNTIME = 5,
  /**
   * An internal panic was caught.
   */
  MQI_STATUS_PANIC = 6,
} MqiStatus;

/**
 * Opaque handle to a generated dataset.
 */
typedef struct MqiDataset MqiDataset;

/**
 * Opaque handle to a fitted and scored replication.
 */
typedef struct MqiReplication MqiReplication;

/**
 * Opaque scenario handle.
 */
typedef struct MqiScenario MqiScenario;

/**
 * Constants implied by a scenario.
 */
typedef struct MqiDerived {
  double region_coef;
  double region_resid_var;
  double volume_coef;
  double hospital_resid_var;
  uint32_t max_volume_w0;
  uint32_t max_volume_w1;
  double volume_var;
  double casemix_slope;
  double casemix_resid_var;
  double patient_share_w1;
  double patient_mean_volume;
  double intercept;
} MqiDerived;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or an empty string. The
 * pointer stays valid until the next call into the library on this thread.
 */
const char *mqi_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mqi_version(void);

/**
 * Creates the baseline scenario.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum MqiStatus mqi_scenario_baseline(struct MqiScenario **out);

/**
 * Parses a scenario from configuration text. Missing keys take baseline
 * values; a `[sweep]` section is validated and then ignored.
 *
 * # Safety
 * `toml` must be null or a NUL-terminated string; `out` must be null or
 * valid for writes.
 */
enum MqiStatus mqi_scenario_from_toml(const char *toml, struct MqiScenario **out);

/**
 * Sets one parameter by its configuration key (`rho`, `sigma_eta`, ...).
 * The scenario is left unchanged if the result would be invalid.
 *
 * # Safety
 * `scenario` must be null or a live handle; `key` null or NUL-terminated.
 */
enum MqiStatus mqi_scenario_set(struct MqiScenario *scenario, const char *key, double value);

/**
 * Reads one parameter by its configuration key.
 *
 * # Safety
 * `scenario` must be null or a live handle; `key` null or NUL-terminated;
 * `out` null or valid for writes.
 */
enum MqiStatus mqi_scenario_get(const struct MqiScenario *scenario, const char *key, double *out);

/**
 * # Safety
 * `scenario` must be null or a handle not yet freed.
 */
void mqi_scenario_free(struct MqiScenario *scenario);

/**
 * Computes the derived constants of a scenario.
 *
 * # Safety
 * `scenario` must be null or a live handle; `out` null or valid for writes.
 */
enum MqiStatus mqi_derive(const struct MqiScenario *scenario, struct MqiDerived *out);

/**
 * Generates the dataset of replication `replication` at sweep point
 * `point` under `master_seed`.
 *
 * # Safety
 * `scenario` must be null or a live handle; `out` null or valid for writes.
 */
enum MqiStatus mqi_dataset_generate(const struct MqiScenario *scenario,
                                    uint64_t master_seed,
                                    uint32_t point,
                                    uint32_t replication,
                                    struct MqiDataset **out);

/**
 * Numbers of regions, hospitals and patients. Any output pointer may be
 * null.
 *
 * # Safety
 * `dataset` must be null or a live handle; non-null outputs valid for writes.
 */
enum MqiStatus mqi_dataset_counts(const struct MqiDataset *dataset,
                                  size_t *regions,
                                  size_t *hospitals,
                                  size_t *patients);

/**
 * Writes the patient-level CSV dump to `path`.
 *
 * # Safety
 * `dataset` must be null or a live handle; `path` null or NUL-terminated.
 */
enum MqiStatus mqi_dataset_write_csv(const struct MqiDataset *dataset, const char *path);

/**
 * # Safety
 * `dataset` must be null or a handle not yet freed.
 */
void mqi_dataset_free(struct MqiDataset *dataset);

/**
 * Generates, fits and scores one replication; identical to the
 * replication the experiment harness runs for the same seed triple.
 *
 * # Safety
 * `scenario` must be null or a live handle; `out` null or valid for writes.
 */
enum MqiStatus mqi_replication_run(const struct MqiScenario *scenario,
                                   uint64_t master_seed,
                                   uint32_t point,
                                   uint32_t replication,
                                   struct MqiReplication **out);

/**
 * One evaluation metric, named as in the summary CSV (`shor`, `spearman`,
 * ...). Returns [`MqiStatus::Missing`] when the metric is undefined.
 *
 * # Safety
 * `replication` must be null or a live handle; names null or
 * NUL-terminated; `out` null or valid for writes.
 */
enum MqiStatus mqi_replication_metric(const struct MqiReplication *replication,
                                      const char *indicator,
                                      const char *metric,
                                      double *out);

/**
 * # Safety
 * `replication` must be null or a handle not yet freed.
 */
void mqi_replication_free(struct MqiReplication *replication);

/**
 * Spearman rank correlation with midranks for ties. Returns
 * [`MqiStatus::Missing`] for constant input or fewer than three values.
 *
 * # Safety
 * `a` and `b` must each point to `n` readable doubles; `out` null or valid
 * for writes.
 */
enum MqiStatus mqi_spearman(const double *a, const double *b, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MQI_H */
