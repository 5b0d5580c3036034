/* C interface to the amcuq library. Every function returns an amcuq_status;
 * on failure amcuq_last_error() describes the problem (per thread). Objects
 * are opaque handles released with the matching *_free function. */
#ifndef AMCUQ_H
#define AMCUQ_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define AMCUQ_API __declspec(dllexport)
#else
#define AMCUQ_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum amcuq_status {
  AMCUQ_OK = 0,
  AMCUQ_ERR_INVALID_ARGUMENT = 1,
  AMCUQ_ERR_SHAPE_MISMATCH = 2,
  AMCUQ_ERR_LENGTH_MISMATCH = 3,
  AMCUQ_ERR_INVALID_GRID = 4,
  AMCUQ_ERR_INSUFFICIENT_CELL = 5,
  AMCUQ_ERR_CORRUPT_HEADER = 6,
  AMCUQ_ERR_VERSION_MISMATCH = 7,
  AMCUQ_ERR_TRUNCATED_PAYLOAD = 8,
  AMCUQ_ERR_IO = 9,
  AMCUQ_ERR_DIVERGENCE = 10,
  AMCUQ_ERR_EMPTY_BATCH = 11,
  AMCUQ_ERR_CONFIG = 12,
  AMCUQ_ERR_MISSING_ARTIFACT = 13,
  AMCUQ_ERR_INTERNAL = 99
} amcuq_status;

typedef enum amcuq_fading { AMCUQ_FADING_IDENTITY = 0, AMCUQ_FADING_RAYLEIGH_IID = 1 } amcuq_fading;

typedef struct amcuq_dataset amcuq_dataset;
typedef struct amcuq_model amcuq_model;
typedef struct amcuq_ensemble amcuq_ensemble;
typedef struct amcuq_experiment amcuq_experiment;

AMCUQ_API const char* amcuq_version(void);
AMCUQ_API const char* amcuq_last_error(void);
AMCUQ_API const char* amcuq_status_name(amcuq_status status);
/* Process exit code for a status: 0 ok, 2 config, 3 missing artifact,
 * 4 divergence, 1 otherwise. */
AMCUQ_API int amcuq_exit_code(amcuq_status status);

/* Datasets */
AMCUQ_API amcuq_status amcuq_dataset_generate(const char* const* schemes, size_t scheme_count, const double* snr_db,
                                              size_t snr_count, size_t frames_per_cell, size_t frame_length,
                                              uint64_t seed, amcuq_fading fading, amcuq_dataset** out);
AMCUQ_API amcuq_status amcuq_dataset_load(const char* path, amcuq_dataset** out);
AMCUQ_API amcuq_status amcuq_dataset_save(const amcuq_dataset* ds, const char* path);
AMCUQ_API amcuq_status amcuq_dataset_split(const amcuq_dataset* ds, double test_fraction, uint64_t seed,
                                           amcuq_dataset** train, amcuq_dataset** test);
AMCUQ_API size_t amcuq_dataset_size(const amcuq_dataset* ds);
AMCUQ_API size_t amcuq_dataset_frame_length(const amcuq_dataset* ds);
AMCUQ_API size_t amcuq_dataset_num_classes(const amcuq_dataset* ds);
/* Copies frame `index` (frame_length x 2 floats, row-major) into samples. */
AMCUQ_API amcuq_status amcuq_dataset_frame(const amcuq_dataset* ds, size_t index, float* samples, size_t capacity,
                                           uint32_t* scheme_index, double* snr_db);
AMCUQ_API void amcuq_dataset_free(amcuq_dataset* ds);

/* Single models */
AMCUQ_API amcuq_status amcuq_model_load(const char* path, amcuq_model** out);
AMCUQ_API amcuq_status amcuq_model_save(const amcuq_model* model, const char* path);
AMCUQ_API size_t amcuq_model_num_classes(const amcuq_model* model);
AMCUQ_API uint64_t amcuq_model_flops(const amcuq_model* model);
/* Softmax output for one frame of `length` doubles (frame_length x 2). */
AMCUQ_API amcuq_status amcuq_model_forward(const amcuq_model* model, const double* frame, size_t length,
                                           double* probs, size_t capacity);
AMCUQ_API void amcuq_model_free(amcuq_model* model);

/* Ensembles */
AMCUQ_API amcuq_status amcuq_ensemble_train(const amcuq_dataset* train, size_t members, uint64_t master_seed,
                                            size_t epochs, size_t batch_size, double learning_rate,
                                            size_t workers, amcuq_ensemble** out);
AMCUQ_API amcuq_status amcuq_ensemble_load(const char* manifest_path, amcuq_ensemble** out);
AMCUQ_API amcuq_status amcuq_ensemble_save(const amcuq_ensemble* ens, const char* manifest_path);
AMCUQ_API size_t amcuq_ensemble_size(const amcuq_ensemble* ens);
AMCUQ_API size_t amcuq_ensemble_num_classes(const amcuq_ensemble* ens);
/* Mean probabilities and per-class variance; each output holds num_classes
 * doubles. `variance` may be NULL. */
AMCUQ_API amcuq_status amcuq_ensemble_predict(const amcuq_ensemble* ens, const double* frame, size_t length,
                                              double* mean, double* variance, size_t capacity);
AMCUQ_API void amcuq_ensemble_free(amcuq_ensemble* ens);

/* Experiments */
AMCUQ_API amcuq_status amcuq_experiment_load(const char* config_path, amcuq_experiment** out);
AMCUQ_API amcuq_status amcuq_experiment_set_output(amcuq_experiment* exp, const char* dir);
AMCUQ_API amcuq_status amcuq_experiment_set_workers(amcuq_experiment* exp, size_t workers);
AMCUQ_API amcuq_status amcuq_experiment_set_seed(amcuq_experiment* exp, uint64_t seed);
/* "f32" or "f64". */
AMCUQ_API amcuq_status amcuq_experiment_set_precision(amcuq_experiment* exp, const char* precision);
/* Stage name: generate, train, evaluate, attack or report. */
AMCUQ_API amcuq_status amcuq_experiment_run(const amcuq_experiment* exp, const char* stage);
AMCUQ_API void amcuq_experiment_free(amcuq_experiment* exp);

#ifdef __cplusplus
}
#endif

#endif
