#ifndef GRAPHCORR_H
#define GRAPHCORR_H

/* C interface to graphcorr. All functions return a gc_status; on failure the
 * message is available from gc_last_error() on the same thread. Strings
 * returned through char** are heap-allocated and released with
 * gc_string_free(). Handles are released with their _free function; passing
 * NULL to any _free function is a no-op. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define GC_API __declspec(dllexport)
#else
#define GC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gc_status {
  GC_OK = 0,
  GC_INVALID_ARGUMENT = 1,
  GC_PARSE_ERROR = 2,
  GC_INVALID_GRAPH = 3,
  GC_NUMERIC_ERROR = 4,
  GC_INFEASIBLE = 5,
  GC_IO_ERROR = 6,
  GC_INTERNAL_ERROR = 7
} gc_status;

typedef enum gc_format { GC_FORMAT_CSV = 0, GC_FORMAT_JSON = 1, GC_FORMAT_MARKDOWN = 2 } gc_format;

typedef struct gc_graph gc_graph;
typedef struct gc_model gc_model;
typedef struct gc_dataset gc_dataset;
typedef struct gc_fit gc_fit;

GC_API const char* gc_version(void);
/* Message of the last failed call on this thread; "" if none. */
GC_API const char* gc_last_error(void);
GC_API const char* gc_status_name(gc_status status);
GC_API void gc_string_free(char* s);

/* ---- graphs ---- */

GC_API gc_status gc_graph_parse(const char* text, gc_graph** out);
GC_API gc_status gc_graph_load(const char* path, gc_graph** out);
GC_API void gc_graph_free(gc_graph* graph);
GC_API size_t gc_graph_num_latents(const gc_graph* graph);
GC_API size_t gc_graph_num_children(const gc_graph* graph);
/* NULL when the index is out of range. */
GC_API const char* gc_graph_latent_name(const gc_graph* graph, size_t index);
GC_API const char* gc_graph_child_name(const gc_graph* graph, size_t index);
GC_API gc_status gc_graph_serialize(const gc_graph* graph, char** out);

/* Structural check of DSL text. GC_OK with an empty report when valid;
 * GC_INVALID_GRAPH with one "code: message" line per violation otherwise;
 * GC_PARSE_ERROR for syntax errors (report untouched). */
GC_API gc_status gc_validate_text(const char* text, char** report);

/* Fills q2[num_latents] in latent order from an inline "p1=8,p2=1" list
 * and/or a JSON object text (either may be NULL). Every latent must be given
 * exactly once, positive; a latent in both with different values fails. */
GC_API gc_status gc_graph_variances(const gc_graph* graph, const char* inline_list, const char* json_text,
                                    double* q2);

/* ---- correlation and prior ---- */

/* Children correlation at q2 (latent order, n = num_latents). method_oracle
 * selects the path-rule evaluation instead of precision inversion. */
GC_API gc_status gc_correlation(const gc_graph* graph, const double* q2, size_t n, int method_oracle,
                                gc_format format, char** out);

/* removal_order: comma list, or NULL/"" for the default. q2 may be NULL to
 * list structure only. JSON. */
GC_API gc_status gc_sequence(const gc_graph* graph, const char* removal_order, const double* q2, size_t n,
                             char** out);

/* Joint log prior with per-step breakdown (JSON). total may be NULL. */
GC_API gc_status gc_prior_eval(const gc_graph* graph, const double* q2, size_t n, double lambda,
                               const char* removal_order, int approximate, int log_variance, double* total,
                               char** out);

/* n draws from the joint prior, one JSON object per line. */
GC_API gc_status gc_prior_sample(const gc_graph* graph, double lambda, size_t n, uint64_t seed,
                                 const char* removal_order, char** out);

/* Calibration table (CSV) over lambdas x conditioning sds. */
GC_API gc_status gc_calibrate(const gc_graph* graph, const double* lambdas, size_t n_lambdas, size_t n,
                              const double* sds, size_t n_sds, uint64_t seed, const char* removal_order,
                              char** out);

/* ---- longitudinal model ---- */

/* Model spec JSON; relative graph_file paths resolve against base_dir
 * (NULL: current directory) or, for gc_model_load, the file's directory. */
GC_API gc_status gc_model_parse(const char* json_text, const char* base_dir, gc_model** out);
GC_API gc_status gc_model_load(const char* path, gc_model** out);
GC_API void gc_model_free(gc_model* model);
GC_API size_t gc_model_num_parameters(const gc_model* model);

GC_API gc_status gc_dataset_parse(const char* csv_text, gc_dataset** out);
GC_API gc_status gc_dataset_load(const char* path, gc_dataset** out);
GC_API void gc_dataset_free(gc_dataset* data);
GC_API size_t gc_dataset_num_rows(const gc_dataset* data);
GC_API size_t gc_dataset_num_individuals(const gc_dataset* data);
GC_API gc_status gc_dataset_to_csv(const gc_dataset* data, char** out);

/* Simulates n individuals at the given times from truths JSON. */
GC_API gc_status gc_simulate(const gc_model* model, const char* truths_json, size_t n, const double* times,
                             size_t n_times, uint64_t seed, gc_dataset** out);

typedef struct gc_fit_options {
  double lambda;        /* PC prior rate, default 5 */
  size_t n_iter;        /* Metropolis iterations, default 20000 */
  uint64_t seed;        /* default 0 */
  int approximate;      /* approximate prior density, default 0 */
} gc_fit_options;

GC_API gc_fit_options gc_fit_options_default(void);
/* MAP followed by adaptive Metropolis. options may be NULL for defaults. */
GC_API gc_status gc_fit_run(const gc_model* model, const gc_dataset* data, const gc_fit_options* options,
                            gc_fit** out);
GC_API void gc_fit_free(gc_fit* fit);
GC_API gc_status gc_fit_json(const gc_fit* fit, char** out);
/* Posterior mean and 95% interval of a summary such as "rho[c1:c2]". */
GC_API gc_status gc_fit_summary(const gc_fit* fit, const char* name, double* mean, double* lower, double* upper);
GC_API double gc_fit_acceptance(const gc_fit* fit);
/* Recovery table against truths JSON, as GC_FORMAT_MARKDOWN or GC_FORMAT_CSV. */
GC_API gc_status gc_fit_recovery(const gc_fit* fit, const gc_model* model, const char* truths_json,
                                 gc_format format, char** out);

#ifdef __cplusplus
}
#endif

#endif
