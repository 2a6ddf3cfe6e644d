/* Malware API-call sequence classification: transformer classifiers and
 * Random Transformer Forest ensembles behind a C interface.
 *
 * Every function that can fail returns an rtf_status; on failure
 * rtf_last_error() describes the problem for the calling thread. Handles are
 * opaque and owned by the caller, who releases them with the matching
 * *_free function. Strings returned through char** are released with
 * rtf_string_free. */
#ifndef RTF_RTF_H
#define RTF_RTF_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(RTF_BUILDING_LIBRARY)
#    define RTF_API __declspec(dllexport)
#  else
#    define RTF_API __declspec(dllimport)
#  endif
#else
#  define RTF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rtf_status {
  RTF_OK = 0,
  RTF_ERR_INVALID_ARGUMENT = 1,
  RTF_ERR_IO = 2,
  RTF_ERR_PARSE = 3,
  RTF_ERR_STATE = 4,
  RTF_ERR_NUMERIC = 5,
  RTF_ERR_INTERNAL = 6
} rtf_status;

typedef struct rtf_dataset rtf_dataset;
typedef struct rtf_config rtf_config;
typedef struct rtf_model rtf_model;
typedef struct rtf_ensemble rtf_ensemble;

typedef struct rtf_metrics {
  size_t rows;
  size_t classes;
  double macro_precision;
  double macro_recall;
  double macro_f1;
  double macro_auc;
} rtf_metrics;

typedef struct rtf_prep_summary {
  size_t total;
  size_t changed;
  size_t unchanged;
} rtf_prep_summary;

#define RTF_SYNTH_MAX_CLASSES 64

typedef struct rtf_synth_options {
  size_t classes;
  size_t class_counts[RTF_SYNTH_MAX_CLASSES];
  size_t tokens;
  size_t min_len;
  size_t max_len;
  size_t fanout;
  double noise;
  uint64_t seed;
} rtf_synth_options;

typedef struct rtf_gradcheck_result {
  size_t coordinates;
  double max_rel_error;
} rtf_gradcheck_result;

typedef struct rtf_run_summary {
  size_t train_size;
  size_t test_size;
  size_t leakage;
  size_t folds;
  double dummy_macro_f1;
  double test_macro_f1;
  double test_macro_auc;
  double train_seconds;
} rtf_run_summary;

/* Library-wide */
RTF_API const char* rtf_version(void);
RTF_API const char* rtf_last_error(void);
RTF_API const char* rtf_status_name(rtf_status status);
RTF_API void rtf_string_free(char* text);
/* Silences (0) or restores (1) log lines on stderr. */
RTF_API void rtf_set_verbose(int verbose);

/* Datasets. format: "canonical", "pair_csv" or "coded_csv". */
RTF_API rtf_status rtf_dataset_load(const char* path, const char* format, rtf_dataset** out);
RTF_API rtf_status rtf_dataset_save(const rtf_dataset* ds, const char* path, int with_ids);
RTF_API void rtf_dataset_free(rtf_dataset* ds);
RTF_API size_t rtf_dataset_size(const rtf_dataset* ds);
RTF_API size_t rtf_dataset_classes(const rtf_dataset* ds);
/* NULL when index is out of range. Valid while ds lives. */
RTF_API const char* rtf_dataset_label(const rtf_dataset* ds, size_t index);
/* CSV: class,count,share then length statistics. */
RTF_API rtf_status rtf_dataset_stats_csv(const rtf_dataset* ds, char** out);
/* drop_labels: comma-separated names, may be NULL. */
RTF_API rtf_status rtf_dataset_filter(const rtf_dataset* ds, size_t min_count, const char* drop_labels,
                                      rtf_dataset** out);
/* report_dir may be NULL; otherwise prep_histogram.csv and prep_summary.csv are written there. */
RTF_API rtf_status rtf_dataset_preprocess(const rtf_dataset* ds, const char* report_dir, rtf_dataset** out,
                                          rtf_prep_summary* summary);
RTF_API rtf_status rtf_dataset_split(const rtf_dataset* ds, double test_fraction, uint64_t seed,
                                     rtf_dataset** train, rtf_dataset** test);
/* Re-indexes ds against the label space of reference. */
RTF_API rtf_status rtf_dataset_align(const rtf_dataset* ds, const rtf_dataset* reference, rtf_dataset** out);
RTF_API void rtf_synth_options_default(rtf_synth_options* options);
RTF_API rtf_status rtf_dataset_synth(const rtf_synth_options* options, rtf_dataset** out);

/* Experiment configuration: flat key = value text, unknown keys rejected. */
RTF_API rtf_status rtf_config_new(rtf_config** out);
RTF_API rtf_status rtf_config_load(const char* path, rtf_config** out);
RTF_API rtf_status rtf_config_set(rtf_config* config, const char* key, const char* value);
RTF_API rtf_status rtf_config_serialize(const rtf_config* config, char** out);
RTF_API void rtf_config_free(rtf_config* config);

/* Single transformer classifier. With val == NULL a stratified
 * validation part (val_fraction) is split off train. */
RTF_API rtf_status rtf_model_train(const rtf_config* config, const rtf_dataset* train, const rtf_dataset* val,
                                   rtf_model** out);
RTF_API rtf_status rtf_model_save(const rtf_model* model, const char* dir);
RTF_API rtf_status rtf_model_load(const char* dir, rtf_model** out);
RTF_API void rtf_model_free(rtf_model* model);
RTF_API size_t rtf_model_classes(const rtf_model* model);
RTF_API rtf_status rtf_model_history_csv(const rtf_model* model, char** out);
/* probs must hold rtf_dataset_size(ds) * rtf_model_classes(model) doubles. */
RTF_API rtf_status rtf_model_predict_proba(const rtf_model* model, const rtf_dataset* ds, double* probs,
                                           size_t capacity);
/* report_dir may be NULL; otherwise eval_report.json, eval_per_class.csv and eval_confusion.csv are written. */
RTF_API rtf_status rtf_model_evaluate(const rtf_model* model, const rtf_dataset* ds, const char* report_dir,
                                      rtf_metrics* out);

/* Random Transformer Forest of config ensemble_n estimators. */
RTF_API rtf_status rtf_ensemble_train(const rtf_config* config, const rtf_dataset* train, const rtf_dataset* val,
                                      rtf_ensemble** out);
RTF_API rtf_status rtf_ensemble_save(const rtf_ensemble* ensemble, const char* dir);
RTF_API rtf_status rtf_ensemble_load(const char* dir, rtf_ensemble** out);
RTF_API void rtf_ensemble_free(rtf_ensemble* ensemble);
RTF_API size_t rtf_ensemble_size(const rtf_ensemble* ensemble);
RTF_API size_t rtf_ensemble_classes(const rtf_ensemble* ensemble);
RTF_API rtf_status rtf_ensemble_predict_proba(const rtf_ensemble* ensemble, const rtf_dataset* ds, double* probs,
                                              size_t capacity);
RTF_API rtf_status rtf_ensemble_evaluate(const rtf_ensemble* ensemble, const rtf_dataset* ds, const char* report_dir,
                                         rtf_metrics* out);

/* Most-frequent baseline fitted on train, scored on test. */
RTF_API rtf_status rtf_dummy_evaluate(const rtf_dataset* train, const rtf_dataset* test, const char* report_dir,
                                      rtf_metrics* out);

/* front_end: "calls" or "chars". */
RTF_API rtf_status rtf_gradcheck(const char* front_end, double eps, size_t coordinates, uint64_t seed,
                                 rtf_gradcheck_result* out);

/* Full experiment into the config's output directory. */
RTF_API rtf_status rtf_run(const rtf_config* config, rtf_run_summary* out);

/* Single-sample inference timing of saved models or ensembles (directories),
 * one CSV row per artifact. */
RTF_API rtf_status rtf_bench_artifacts(const char* const* dirs, size_t count, const rtf_dataset* pool, size_t draws,
                                       uint64_t seed, char** csv);
/* Trains a single model and, when ensemble_n > 1, an ensemble, timing
 * training `repeats` times each, then times inference as above. */
RTF_API rtf_status rtf_bench_train(const rtf_config* config, const rtf_dataset* train, const rtf_dataset* pool,
                                   size_t repeats, size_t draws, char** csv);

#ifdef __cplusplus
}
#endif

#endif /* RTF_RTF_H */
