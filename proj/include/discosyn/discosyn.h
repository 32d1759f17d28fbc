/* C interface to the discosyn library: synthetic discourse-relation data
 * generation, screening, classifier adaptation and evaluation.
 *
 * Every call returns a ds_status. On failure, ds_last_error() describes the
 * problem until the next failing call on the same thread. Strings handed out
 * through char** parameters are owned by the caller and released with
 * ds_string_free. Handles are not safe for concurrent use.
 */
#ifndef DISCOSYN_H
#define DISCOSYN_H

#include <stddef.h>

#if defined(_WIN32)
#define DS_API __declspec(dllexport)
#else
#define DS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ds_status {
  DS_OK = 0,
  DS_ERR_INVALID_ARGUMENT = 1,
  DS_ERR_FORMAT = 2,
  DS_ERR_UNKNOWN_LABEL = 3,
  DS_ERR_CONFIG = 4,
  DS_ERR_TRANSPORT = 5,
  DS_ERR_GENERATION_REJECTED = 6,
  DS_ERR_STATE = 7,
  DS_ERR_IO = 8,
  DS_ERR_INTERNAL = 9
} ds_status;

DS_API const char* ds_version(void);
DS_API const char* ds_status_name(ds_status status);
DS_API const char* ds_last_error(void);
DS_API void ds_string_free(char* s);

/* Configuration: flat "key.path = value" files with include lines. */
typedef struct ds_config ds_config;

DS_API ds_status ds_config_load(const char* path, ds_config** out);
/* An empty configuration with every default. */
DS_API ds_status ds_config_create(ds_config** out);
DS_API ds_status ds_config_set(ds_config* config, const char* key, const char* value);
DS_API void ds_config_destroy(ds_config* config);

/* Experiment pipeline over one output directory. */
typedef struct ds_pipeline ds_pipeline;
typedef struct ds_run_result ds_run_result;

/* output_dir may be NULL to use the configuration's run.output_dir. */
DS_API ds_status ds_pipeline_create(const ds_config* config, const char* output_dir, ds_pipeline** out);
/* Reopens an output directory with the configuration it was run with. */
DS_API ds_status ds_pipeline_open(const char* output_dir, ds_pipeline** out);
DS_API void ds_pipeline_destroy(ds_pipeline* pipeline);

/* JSON array of stage ids in execution order. */
DS_API ds_status ds_pipeline_stages(const ds_pipeline* pipeline, char** json_out);

typedef void (*ds_stage_callback)(const char* stage_id, const char* status, const char* message, void* user);
DS_API ds_status ds_pipeline_set_callback(ds_pipeline* pipeline, ds_stage_callback callback, void* user);

/* Brings the selected stages (id prefixes such as "train-base" or
 * "screen/EP") and their dependencies up to date; no targets means all.
 * Stage failures are reported through the result, not the status. */
DS_API ds_status ds_pipeline_run(ds_pipeline* pipeline, const char* const* targets, size_t n_targets, int dry_run,
                                 ds_run_result** out);

/* 0 success, 1 stage failure, 2 configuration error, 3 backend error. */
DS_API int ds_run_result_exit_code(const ds_run_result* result);
DS_API size_t ds_run_result_stage_count(const ds_run_result* result);
/* Borrowed strings, valid until the result is destroyed. */
DS_API ds_status ds_run_result_stage(const ds_run_result* result, size_t index, const char** stage_id,
                                     const char** status, const char** message);
DS_API size_t ds_run_result_warning_count(const ds_run_result* result);
DS_API const char* ds_run_result_warning(const ds_run_result* result, size_t index);
/* Rendered results table, or NULL when the report stage did not complete. */
DS_API const char* ds_run_result_report(const ds_run_result* result);
DS_API void ds_run_result_destroy(ds_run_result* result);

/* Reads a corpus file ("source", "target" or "raw") and returns a JSON
 * summary of its contents. split applies to source corpora and may be NULL
 * for the standard split. */
DS_API ds_status ds_ingest(const char* path, const char* format, const char* split, int annotators,
                           char** summary_json);

/* Prompt rendering with the bundled templates. example_connective may be
 * NULL to use the first connective of example_label. */
DS_API ds_status ds_render_dc_prompt(const char* arg1, const char* label, int connective_option,
                                     const char* example_arg1, const char* example_arg2,
                                     const char* example_label, const char* example_connective, char** out);
DS_API ds_status ds_render_dr_prompt(const char* arg1, const char* label, const char* example_arg1,
                                     const char* example_arg2, char** out);

/* Scores a prediction file under a protocol name ("discard-alternatives",
 * "all-gold-fn", "alternatives-as-tp"); returns the report as JSON. */
DS_API ds_status ds_evaluate_file(const char* predictions_path, const char* protocol, char** report_json);

typedef struct ds_t_test_result {
  double t;
  double df;
  double p;
  int significant;
} ds_t_test_result;

DS_API ds_status ds_t_test(const double* model_runs, size_t n_model, const double* baseline_runs, size_t n_baseline,
                           double alpha, int paired, ds_t_test_result* out);

/* Label taxonomy. */
DS_API size_t ds_label_count(void);
DS_API const char* ds_label_name(size_t index);
DS_API ds_status ds_is_training_label(const char* label, int* out);
/* Most frequent misprediction of a label under the bundled confusion map. */
DS_API ds_status ds_confusion_of(const char* label, char** out);

#ifdef __cplusplus
}
#endif

#endif
