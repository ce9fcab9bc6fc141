#ifndef GAPLAB_H
#define GAPLAB_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define GAPLAB_API __attribute__((visibility("default")))
#else
#define GAPLAB_API
#endif

/* Status codes returned by every fallible call. */
typedef enum gaplab_status {
  GAPLAB_OK = 0,
  GAPLAB_ERR_INVALID_ARGUMENT = 1,
  GAPLAB_ERR_CONFIG = 2,
  GAPLAB_ERR_DOMAIN = 3,
  GAPLAB_ERR_INVARIANT = 4,
  GAPLAB_ERR_NUMERICAL = 5,
  GAPLAB_ERR_IO = 6,
  GAPLAB_ERR_INTERNAL = 7
} gaplab_status;

typedef struct gaplab_config gaplab_config;
typedef struct gaplab_field gaplab_field;
typedef struct gaplab_table gaplab_table;

GAPLAB_API const char* gaplab_version(void);
/* Message of the last failed call on this thread ("" when none). */
GAPLAB_API const char* gaplab_last_error(void);
GAPLAB_API const char* gaplab_status_name(int status);
/* Releases strings returned through char** out-parameters. */
GAPLAB_API void gaplab_string_free(char* s);

/* Run configuration (INI text with sections geometry, solver, sweep, barrier, transform, output). */
GAPLAB_API int gaplab_config_default(gaplab_config** out);
GAPLAB_API int gaplab_config_load(const char* path, gaplab_config** out);
GAPLAB_API int gaplab_config_parse(const char* text, gaplab_config** out);
/* key is "section.key"; the configuration is revalidated after the change. */
GAPLAB_API int gaplab_config_set(gaplab_config* cfg, const char* key, const char* value);
GAPLAB_API int gaplab_config_get(const gaplab_config* cfg, const char* key, char** value);
GAPLAB_API int gaplab_config_hash(const gaplab_config* cfg, char** hex);
GAPLAB_API int gaplab_config_canonical(const gaplab_config* cfg, char** text);
GAPLAB_API int gaplab_config_to_ini(const gaplab_config* cfg, char** text);
GAPLAB_API void gaplab_config_free(gaplab_config* cfg);

/* Solves at geometry.epsilon with the solver section. A non-converged solve still
   returns GAPLAB_OK; query gaplab_field_converged. */
GAPLAB_API int gaplab_solve(const gaplab_config* cfg, gaplab_field** out);
GAPLAB_API int gaplab_field_load(const char* path, gaplab_field** out);
GAPLAB_API int gaplab_field_save(const gaplab_field* field, const char* path);
GAPLAB_API int gaplab_field_converged(const gaplab_field* field, int* converged);
GAPLAB_API int gaplab_field_size(const gaplab_field* field, size_t* nodes);
/* Copies min(capacity, size) nodal values. */
GAPLAB_API int gaplab_field_values(const gaplab_field* field, double* values, size_t capacity);
GAPLAB_API int gaplab_field_max_grad(const gaplab_field* field, double* max_grad);
/* JSON summary: max_grad, energy, iterations, converged, residuals, oscillation fit. */
GAPLAB_API int gaplab_field_summary(const gaplab_field* field, char** json);
GAPLAB_API void gaplab_field_free(gaplab_field* field);

/* Epsilon sweep of the configured geometry family. */
GAPLAB_API int gaplab_sweep(const gaplab_config* cfg, gaplab_table** out);
GAPLAB_API int gaplab_table_parse_csv(const char* csv, gaplab_table** out);
GAPLAB_API int gaplab_table_load_csv(const char* path, gaplab_table** out);
GAPLAB_API int gaplab_table_csv(const gaplab_table* table, char** csv);
GAPLAB_API int gaplab_table_rows(const gaplab_table* table, size_t* rows);
/* Rate fit with theorem targets as JSON; fails with GAPLAB_ERR_INVALID_ARGUMENT on < 4 rows. */
GAPLAB_API int gaplab_table_fit(const gaplab_table* table, const gaplab_config* cfg, char** json);
/* Resolution check: repeats the sweep with grid_nt doubled. */
GAPLAB_API int gaplab_table_resolution(const gaplab_table* table, const gaplab_config* cfg, char** json);
/* Standalone SVG log-log plot and the plotted data as CSV. */
GAPLAB_API int gaplab_table_plot(const gaplab_table* table, const gaplab_config* cfg, char** svg, char** csv);
GAPLAB_API void gaplab_table_free(gaplab_table* table);

/* Barrier sign certificate or Bernstein report as JSON. */
GAPLAB_API int gaplab_certify(const gaplab_config* cfg, char** json);
/* Coefficient bounds of the annular transform over transform.radii as JSON. */
GAPLAB_API int gaplab_check_transform(const gaplab_config* cfg, char** json);
/* Manifest JSON (config hash, geometry, timestamp, versions) for a command. */
GAPLAB_API int gaplab_manifest(const gaplab_config* cfg, const char* command, char** json);

#ifdef __cplusplus
}
#endif

#endif
