// Copyright 2026 The fudsa Authors
// SPDX-License-Identifier: Apache-2.0

/* C interface to the fudsa segmentation library.
 *
 * Every fallible call returns a fudsa_status; on failure the message is
 * available from fudsa_last_error() on the same thread until the next call.
 * Handles are opaque and owned by the caller; release them with the matching
 * *_free function. Strings returned through char** are heap allocated and
 * released with fudsa_string_free.
 */

#ifndef FUDSA_FUDSA_H_
#define FUDSA_FUDSA_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define FUDSA_API __declspec(dllexport)
#else
#define FUDSA_API __attribute__((visibility("default")))
#endif

typedef enum fudsa_status {
  FUDSA_OK = 0,
  FUDSA_ERR_INVALID_SHAPE = 1,
  FUDSA_ERR_SHAPE_MISMATCH = 2,
  FUDSA_ERR_INVALID_ARGUMENT = 3,
  FUDSA_ERR_INVALID_LABEL = 4,
  FUDSA_ERR_INVALID_STATE = 5,
  FUDSA_ERR_CORRUPT_CHECKPOINT = 6,
  FUDSA_ERR_NUMERICAL_DIVERGENCE = 7,
  FUDSA_ERR_IO = 8,
  FUDSA_ERR_INTERNAL = 9
} fudsa_status;

FUDSA_API const char* fudsa_version(void);
FUDSA_API const char* fudsa_status_name(fudsa_status status);
/* Message of the last failed call on this thread ("" if none). */
FUDSA_API const char* fudsa_last_error(void);
FUDSA_API void fudsa_string_free(char* s);

/* Seeds derived from the single run seed. */
#define FUDSA_SEED_OFFSET_INIT 1u    /* model parameter initialization */
#define FUDSA_SEED_OFFSET_SHUFFLE 2u /* per-epoch minibatch order */
#define FUDSA_SEED_OFFSET_SPLIT 3u   /* train/val split in preprocess */
#define FUDSA_SEED_OFFSET_SYNTH 1000u /* phantom k uses seed + 1000 + k */

/* ---- run configuration (flat key=value text) ---------------------------- */

typedef struct fudsa_config fudsa_config;

FUDSA_API fudsa_status fudsa_config_new(fudsa_config** out);
FUDSA_API fudsa_status fudsa_config_parse(const char* text, fudsa_config** out);
FUDSA_API fudsa_status fudsa_config_load(const char* path, fudsa_config** out);
/* Unknown keys and malformed values fail with FUDSA_ERR_INVALID_ARGUMENT. */
FUDSA_API fudsa_status fudsa_config_set(fudsa_config* config, const char* key, const char* value);
FUDSA_API fudsa_status fudsa_config_validate(const fudsa_config* config);
/* Resolved text: every key with its value, fixed order. */
FUDSA_API fudsa_status fudsa_config_to_text(const fudsa_config* config, char** out);
FUDSA_API void fudsa_config_free(fudsa_config* config);

/* ---- datasets ------------------------------------------------------------ */

/* Writes `count` phantoms (images/<id>.pgm raw HU, masks/<id>.pgm 0/255) and
 * manifest.txt. `size` must be >= 16 and divisible by 2^levels. */
FUDSA_API fudsa_status fudsa_synth_dataset(const char* out_dir, int64_t count, int64_t size,
                                           int levels, uint64_t seed);

typedef struct fudsa_preprocess_summary {
  int64_t input_count;
  int64_t kept_count;
  int64_t train_count;
  int64_t val_count;
} fudsa_preprocess_summary;

/* window -> normalize -> resize -> lesion filter -> split (split seed is
 * seed + FUDSA_SEED_OFFSET_SPLIT). `summary` may be NULL. */
FUDSA_API fudsa_status fudsa_preprocess(const char* in_dir, const char* out_dir, double lo_hu,
                                        double hi_hu, int64_t size, int levels, uint64_t seed,
                                        fudsa_preprocess_summary* summary);

/* ---- models -------------------------------------------------------------- */

typedef struct fudsa_model fudsa_model;

/* Fresh model from a config; initialization uses config seed + FUDSA_SEED_OFFSET_INIT. */
FUDSA_API fudsa_status fudsa_model_new(const fudsa_config* config, fudsa_model** out);
/* Parameters, optimizer state and config from a FUD1 checkpoint. */
FUDSA_API fudsa_status fudsa_model_load(const char* path, fudsa_model** out);
FUDSA_API fudsa_status fudsa_model_save(const fudsa_model* model, const char* path);
FUDSA_API fudsa_status fudsa_model_config(const fudsa_model* model, fudsa_config** out);
FUDSA_API int64_t fudsa_model_parameter_count(const fudsa_model* model);
FUDSA_API int64_t fudsa_model_adam_steps(const fudsa_model* model);
/* One line per parameter tensor: name, shape, count. */
FUDSA_API fudsa_status fudsa_model_summary(const fudsa_model* model, char** out);
FUDSA_API void fudsa_model_free(fudsa_model* model);

/* ---- training ------------------------------------------------------------ */

typedef struct fudsa_epoch {
  int epoch;
  double train_loss;
  double val_loss;
  double val_dsc;
  double val_iou;
  double val_recall;
} fudsa_epoch;

typedef void (*fudsa_epoch_callback)(const fudsa_epoch* epoch, void* user);

typedef struct fudsa_train_report fudsa_train_report;

/* Trains on the train/val split of a preprocessed dataset. On success the
 * model holds the best-validation parameters and optimizer state; the report
 * keeps the final-epoch state. Non-finite losses fail with
 * FUDSA_ERR_NUMERICAL_DIVERGENCE. `callback` may be NULL. */
FUDSA_API fudsa_status fudsa_train(fudsa_model* model, const char* data_dir,
                                   fudsa_epoch_callback callback, void* user,
                                   fudsa_train_report** out);
FUDSA_API int fudsa_train_report_best_epoch(const fudsa_train_report* report);
FUDSA_API int fudsa_train_report_epochs(const fudsa_train_report* report);
/* CSV with header, one row per epoch and a trailing "# ..." summary line. */
FUDSA_API fudsa_status fudsa_train_report_csv(const fudsa_train_report* report, char** out);
/* Model carrying the final-epoch parameters and optimizer state. */
FUDSA_API fudsa_status fudsa_train_report_final_model(const fudsa_train_report* report,
                                                      fudsa_model** out);
FUDSA_API void fudsa_train_report_free(fudsa_train_report* report);

/* ---- evaluation and prediction ------------------------------------------- */

typedef struct fudsa_metrics {
  int64_t n_images;
  int64_t tp;
  int64_t fp;
  int64_t fn;
  int64_t tn;
  double dsc;
  double iou;
  double recall;
  double mean_loss;
} fudsa_metrics;

/* `split` is "train", "val" or "all". Counts are pooled over the split. */
FUDSA_API fudsa_status fudsa_evaluate(const fudsa_model* model, const char* data_dir,
                                      const char* split, fudsa_metrics* out);
FUDSA_API const char* fudsa_metrics_csv_header(void);
FUDSA_API fudsa_status fudsa_metrics_csv_row(const char* split, const fudsa_metrics* metrics,
                                             char** out);

/* Image: .ften (normalized, (1,1,H,W)) or 16-bit PGM of HU + 32768 (windowed
 * with the model config). Writes a 0/255 mask PGM. With `attention_dir`
 * non-NULL, writes att_l<l>_wcha.ften and att_l<l>_q.ften per gated level;
 * `files_written` (may be NULL) receives the number of dump files. */
FUDSA_API fudsa_status fudsa_predict_file(const fudsa_model* model, const char* image_path,
                                          const char* mask_path, const char* attention_dir,
                                          int* files_written);

/* ---- gradient check ------------------------------------------------------ */

typedef struct fudsa_gradcheck_options {
  int levels;
  int channels;
  int64_t size;
  int coords_per_tensor;
  double step;
  double threshold;
  uint64_t seed;
  int inject_fault; /* nonzero: deliberately wrong sigmoid backward rule */
} fudsa_gradcheck_options;

typedef struct fudsa_gradcheck_report fudsa_gradcheck_report;

FUDSA_API void fudsa_gradcheck_defaults(fudsa_gradcheck_options* options);
FUDSA_API fudsa_status fudsa_gradcheck(const fudsa_gradcheck_options* options,
                                       fudsa_gradcheck_report** out);
FUDSA_API size_t fudsa_gradcheck_count(const fudsa_gradcheck_report* report);
FUDSA_API const char* fudsa_gradcheck_name(const fudsa_gradcheck_report* report, size_t i);
FUDSA_API double fudsa_gradcheck_error(const fudsa_gradcheck_report* report, size_t i);
FUDSA_API int64_t fudsa_gradcheck_coords(const fudsa_gradcheck_report* report, size_t i);
FUDSA_API double fudsa_gradcheck_max_error(const fudsa_gradcheck_report* report);
FUDSA_API int fudsa_gradcheck_passed(const fudsa_gradcheck_report* report);
FUDSA_API void fudsa_gradcheck_free(fudsa_gradcheck_report* report);

#ifdef __cplusplus
}
#endif

#endif /* FUDSA_FUDSA_H_ */
