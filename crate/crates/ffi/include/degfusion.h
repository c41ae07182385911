#ifndef DEGFUSION_H
#define DEGFUSION_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DfStatus {
  DF_OK = 0,
  DF_NULL_POINTER = 1,
  DF_INVALID_ARGUMENT = 2,
  DF_CONFIG_ERROR = 3,
  DF_IO_ERROR = 4,
  DF_PARSE_ERROR = 5,
  DF_NUMERICAL_ERROR = 6,
  DF_BUFFER_TOO_SMALL = 7,
  DF_OUT_OF_RANGE = 8,
  DF_PANIC = 9,
} DfStatus;

typedef enum DfTermination {
  DF_CONVERGED = 0,
  DF_CAP_REACHED = 1,
  DF_EXHAUSTED_VARIABLES = 2,
  DF_NO_DATA = 3,
} DfTermination;

/**
 * Parsed and validated run configuration.
 */
typedef struct DfConfig DfConfig;

/**
 * Result of a full pipeline run.
 */
typedef struct DfReport DfReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *df_version(void);

/**
 * Copies the calling thread's last error message; an empty string if none.
 */
enum DfStatus df_last_error_message(char *buf, size_t capacity, size_t *required);

/**
 * Loads a TOML configuration file.
 */
enum DfStatus df_config_load(const char *path, struct DfConfig **out);

/**
 * Parses a TOML configuration held in memory; relative data paths resolve
 * against `base_dir` (may be null for the working directory).
 */
enum DfStatus df_config_from_toml(const char *text, const char *base_dir, struct DfConfig **out);

void df_config_free(struct DfConfig *config);

enum DfStatus df_config_set_seed(struct DfConfig *config, uint64_t seed);

/**
 * Number of model inputs.
 */
enum DfStatus df_config_input_count(const struct DfConfig *config, size_t *out);

/**
 * Number of nodes of the simulation grid.
 */
enum DfStatus df_config_grid_len(const struct DfConfig *config, size_t *out);

/**
 * Runs the configured model at `inputs` (`input_len` values) and writes the
 * trajectory into `values`, which must hold the grid length.
 */
enum DfStatus df_simulate(const struct DfConfig *config,
                          const double *inputs,
                          size_t input_len,
                          double *values,
                          size_t capacity);

/**
 * Biased HSIC estimate between two samples of length `n`.
 */
enum DfStatus df_hsic(const double *x, const double *z, size_t n, double *out);

/**
 * Normalized HSIC (R2) between two samples of length `n`.
 */
enum DfStatus df_r2_hsic(const double *x, const double *z, size_t n, double *out);

/**
 * Loads the configured data and runs the whole pipeline.
 */
enum DfStatus df_pipeline_run(const struct DfConfig *config, struct DfReport **out);

void df_report_free(struct DfReport *report);

enum DfStatus df_report_termination(const struct DfReport *report, enum DfTermination *out);

enum DfStatus df_report_iterations(const struct DfReport *report, size_t *out);

/**
 * 1 when every iteration's chains passed the Gelman-Rubin check.
 */
enum DfStatus df_report_chains_converged(const struct DfReport *report, int32_t *out);

/**
 * Name of input `index`.
 */
enum DfStatus df_report_variable_name(const struct DfReport *report,
                                      size_t index,
                                      char *buf,
                                      size_t capacity,
                                      size_t *required);

/**
 * Largest KL divergence recorded for input `index` (0 if never calibrated).
 */
enum DfStatus df_report_kl(const struct DfReport *report, size_t index, double *out);

/**
 * Median RUL of the final prior (`posterior` nonzero) or of the initial one.
 */
enum DfStatus df_report_rul_median(const struct DfReport *report, int32_t posterior, double *out);

/**
 * Time of the last observation, from which RUL is measured.
 */
enum DfStatus df_report_current_time(const struct DfReport *report, double *out);

/**
 * Writes the report directory layout into `dir`.
 */
enum DfStatus df_report_write(const struct DfReport *report, const char *dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEGFUSION_H */
