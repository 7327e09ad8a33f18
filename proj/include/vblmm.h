/* C interface to the multilevel variational-Bayes fitting engine.
 *
 * All functions return vblmm_status; out-parameters are written only on
 * VBLMM_OK.  Handles are opaque and must be released with the matching
 * _free function.  Configuration goes in as JSON text; results come back as
 * JSON documents owned by the report handle.  vblmm_last_error() returns a
 * thread-local message describing the most recent failure.
 */
#ifndef VBLMM_H
#define VBLMM_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define VBLMM_API_VERSION 1u

typedef enum vblmm_status {
  VBLMM_OK = 0,
  VBLMM_ERR_INVALID_ARGUMENT = 1,
  VBLMM_ERR_CONFIG = 2,
  VBLMM_ERR_IO = 3,
  VBLMM_ERR_DATA = 4,
  VBLMM_ERR_NUMERIC = 5
} vblmm_status;

typedef struct vblmm_dataset vblmm_dataset;
typedef struct vblmm_report vblmm_report;

uint32_t vblmm_api_version(void);
const char* vblmm_status_name(vblmm_status status);
/* Thread-local description of the last failure; empty string if none. */
const char* vblmm_last_error(void);

/* Loads a long-format CSV with the column roles given as schema JSON:
 * {"response":..,"group_id":..,"subgroup_id":?,"R":[..],"A":[..],"S":[..],
 *  "Z":?,"ZL1":?,"ZL2":?}. */
vblmm_status vblmm_dataset_load_csv(const char* csv_path, const char* schema_json,
                                    vblmm_dataset** out);

/* Draws a dataset from the generator configuration (JSON). */
vblmm_status vblmm_dataset_simulate(const char* sim_config_json, uint64_t seed,
                                    vblmm_dataset** out);

vblmm_status vblmm_dataset_write_csv(const vblmm_dataset* ds, const char* csv_path);

/* Ground-truth JSON for simulated datasets (VBLMM_ERR_INVALID_ARGUMENT when
 * the dataset was loaded from a file).  The string lives on the dataset. */
vblmm_status vblmm_dataset_truth_json(const vblmm_dataset* ds, const char** out_json);

size_t vblmm_dataset_group_count(const vblmm_dataset* ds);
size_t vblmm_dataset_observation_count(const vblmm_dataset* ds);

void vblmm_dataset_free(vblmm_dataset* ds);

/* Fit pipeline (standardization, variational fit, selection); config JSON:
 * {"prior":{..},"fit":{..},"standardize":bool,"savs":{..},"credible_level":..}. */
vblmm_status vblmm_fit(const vblmm_dataset* ds, const char* config_json, vblmm_report** out);

/* Replicated simulate/fit/select (optionally sampler-compare) pipeline. */
vblmm_status vblmm_evaluate(const char* config_json, vblmm_report** out);

/* Timing and input-storage grid over (m, p_S). */
vblmm_status vblmm_bench(const char* config_json, vblmm_report** out);

/* Borrowed pointer to the report's JSON document (valid until _free). */
const char* vblmm_report_json(const vblmm_report* report);

/* CSV rendering of a bench report; NULL for other report kinds. */
const char* vblmm_report_csv(const vblmm_report* report);

void vblmm_report_free(vblmm_report* report);

#ifdef __cplusplus
}
#endif

#endif /* VBLMM_H */
