/* C interface to the geoinv toolkit. Every function returns a status code;
 * on failure geoinv_last_error() describes the problem for the calling
 * thread. Handles are opaque and owned by the caller, who releases them with
 * the matching *_free function. Strings returned through char** out
 * parameters are released with geoinv_string_free. */
#ifndef GEOINV_GEOINV_H
#define GEOINV_GEOINV_H

#include <stddef.h>
#include <stdint.h>

#if defined(GEOINV_BUILDING_LIBRARY)
#define GEOINV_API __attribute__((visibility("default")))
#else
#define GEOINV_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum geoinv_status {
  GEOINV_OK = 0,
  GEOINV_ERR_INVALID_ARGUMENT = 1,
  GEOINV_ERR_INVALID_BOUNDS = 2,
  GEOINV_ERR_DOMAIN = 3,
  GEOINV_ERR_DIMENSION_MISMATCH = 4,
  GEOINV_ERR_SINGULAR_GEOMETRY = 5,
  GEOINV_ERR_DEGENERATE_CELL = 6,
  GEOINV_ERR_NEAR_FIELD = 7,
  GEOINV_ERR_RESOLUTION = 8,
  GEOINV_ERR_NUMERIC = 9,
  GEOINV_ERR_IO = 10,
  GEOINV_ERR_FORMAT = 11,
  GEOINV_ERR_CONFIG = 12,
  GEOINV_ERR_INTERNAL = 13
} geoinv_status;

typedef struct geoinv_config geoinv_config;
typedef struct geoinv_volume geoinv_volume;
typedef struct geoinv_fielddata geoinv_fielddata;
typedef struct geoinv_map_result geoinv_map_result;
typedef struct geoinv_sample_set geoinv_sample_set;

GEOINV_API const char* geoinv_version(void);
GEOINV_API const char* geoinv_last_error(void);
GEOINV_API const char* geoinv_status_name(geoinv_status status);
GEOINV_API void geoinv_string_free(char* s);
GEOINV_API geoinv_status geoinv_set_threads(int n);

/* Run configuration (strict JSON; unknown keys are GEOINV_ERR_CONFIG). */
GEOINV_API geoinv_status geoinv_config_parse(const char* json_text, geoinv_config** out);
GEOINV_API void geoinv_config_free(geoinv_config* cfg);
/* Canonical JSON of the sampler section, and its SHA-256. */
GEOINV_API geoinv_status geoinv_config_sampler_hash(const geoinv_config* cfg, char** out);

/* Property volumes. kind is "density", "susceptibility", "phase" or
 * "log-susceptibility". */
GEOINV_API geoinv_status geoinv_volume_create(size_t nx, size_t ny, size_t nz, double h,
                                              const double origin[3], const char* kind,
                                              const double* values, size_t n,
                                              geoinv_volume** out);
GEOINV_API geoinv_status geoinv_volume_read(const char* path, geoinv_volume** out);
GEOINV_API geoinv_status geoinv_volume_write(const geoinv_volume* v, const char* path);
GEOINV_API void geoinv_volume_free(geoinv_volume* v);
GEOINV_API geoinv_status geoinv_volume_shape(const geoinv_volume* v, size_t* nx, size_t* ny,
                                             size_t* nz, double* h);
GEOINV_API geoinv_status geoinv_volume_values(const geoinv_volume* v, const double** data,
                                              size_t* n);
GEOINV_API const char* geoinv_volume_kind(const geoinv_volume* v);

/* Observed fields (FDAT1 files carry the survey, sigmas and field config). */
GEOINV_API geoinv_status geoinv_fielddata_read(const char* path, geoinv_fielddata** out);
GEOINV_API geoinv_status geoinv_fielddata_write(const geoinv_fielddata* d, const char* path);
GEOINV_API void geoinv_fielddata_free(geoinv_fielddata* d);
GEOINV_API geoinv_status geoinv_fielddata_size(const geoinv_fielddata* d, size_t* n_stations);
GEOINV_API geoinv_status geoinv_fielddata_grav(const geoinv_fielddata* d, const double** data,
                                               size_t* n);
GEOINV_API geoinv_status geoinv_fielddata_mag(const geoinv_fielddata* d, const double** data,
                                              size_t* n);
GEOINV_API geoinv_status geoinv_survey_write(const geoinv_fielddata* d, const char* path);

/* Builds the scenario from the config's grid, bounds and scenario sections.
 * labels is a phase volume: +1 ore cells, -1 host. Any out pointer may be
 * NULL. */
GEOINV_API geoinv_status geoinv_synthesize(const geoinv_config* cfg, uint64_t seed,
                                           geoinv_volume** rho, geoinv_volume** chi,
                                           geoinv_volume** labels, geoinv_fielddata** data);

/* Noiseless response of (rho, chi) on the survey of `like`; sigmas and field
 * configuration are copied from it. */
GEOINV_API geoinv_status geoinv_forward(const geoinv_volume* rho, const geoinv_volume* chi,
                                        const geoinv_fielddata* like, geoinv_fielddata** out);

GEOINV_API geoinv_status geoinv_rmse(const double* pred, const double* obs, size_t n,
                                     double* out);
GEOINV_API geoinv_status geoinv_fielddata_rmse(const geoinv_fielddata* pred,
                                               const geoinv_fielddata* obs, double* rmse_grav,
                                               double* rmse_mag);
/* tables_json: {"baseline":[...], "methods":{"name":[...], ...}}; returns the
 * report as JSON. */
GEOINV_API geoinv_status geoinv_metrics_report(const char* tables_json, char** out_json);

/* MAP inversion on the config's grid, bounds, gl and map sections. */
GEOINV_API geoinv_status geoinv_invert_map(const geoinv_config* cfg, const geoinv_fielddata* data,
                                           uint64_t seed, geoinv_map_result** out);
GEOINV_API void geoinv_map_result_free(geoinv_map_result* r);
GEOINV_API geoinv_status geoinv_map_result_model(const geoinv_map_result* r, geoinv_volume** rho,
                                                 geoinv_volume** chi);
/* CSV rows restart,iter,energy,grad_norm,step,backtracks. */
GEOINV_API geoinv_status geoinv_map_result_trace_csv(const geoinv_map_result* r, char** out);
GEOINV_API geoinv_status geoinv_map_result_summary_json(const geoinv_map_result* r, char** out);

/* Posterior sampling with the config's sampler section. */
GEOINV_API geoinv_status geoinv_sample(const geoinv_config* cfg, const geoinv_fielddata* data,
                                       size_t n_chains, uint64_t seed, geoinv_sample_set** out);
GEOINV_API void geoinv_sample_set_free(geoinv_sample_set* s);
GEOINV_API size_t geoinv_sample_set_count(const geoinv_sample_set* s);
GEOINV_API int geoinv_sample_set_aborted(const geoinv_sample_set* s, size_t chain);
/* chi is clipped at zero; phi is the unclipped phase. */
GEOINV_API geoinv_status geoinv_sample_set_volumes(const geoinv_sample_set* s, size_t chain,
                                                   geoinv_volume** rho, geoinv_volume** chi,
                                                   geoinv_volume** phi);
GEOINV_API geoinv_status geoinv_sample_set_diagnostics_json(const geoinv_sample_set* s,
                                                            size_t chain, char** out);
/* Mean and standard deviation over completed chains. */
GEOINV_API geoinv_status geoinv_sample_set_moments(const geoinv_sample_set* s,
                                                   geoinv_volume** mean_rho,
                                                   geoinv_volume** mean_chi,
                                                   geoinv_volume** std_rho,
                                                   geoinv_volume** std_chi);
GEOINV_API geoinv_status geoinv_sample_set_summary_json(const geoinv_sample_set* s, char** out);

/* CSV rows eps,energy,c0_gap from the gl_diag section. */
GEOINV_API geoinv_status geoinv_gl_diagnostic(const geoinv_config* cfg, char** out_csv);

/* Lower-case hex digest into out[65]. */
GEOINV_API geoinv_status geoinv_file_sha256(const char* path, char out[65]);

#ifdef __cplusplus
}
#endif

#endif
