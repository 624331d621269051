/* C interface to the evuav event segmentation library.
 *
 * All objects are opaque handles released with their *_free function.
 * Functions return EVUAV_OK or an error status; evuav_last_error() then
 * holds a message for the calling thread until its next failing call.
 */
#ifndef EVUAV_EVUAV_H
#define EVUAV_EVUAV_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define EVUAV_API __declspec(dllexport)
#else
#define EVUAV_API __attribute__((visibility("default")))
#endif

typedef enum evuav_status {
  EVUAV_OK = 0,
  EVUAV_ERR_PARSE = 1,      /* malformed file or value */
  EVUAV_ERR_VALIDATION = 2, /* well-formed but invalid input or config */
  EVUAV_ERR_CONTRACT = 3,   /* precondition violated by the caller */
  EVUAV_ERR_IO = 4,         /* file could not be opened, read or written */
  EVUAV_ERR_RUNTIME = 5,    /* failure during computation, e.g. non-finite loss */
  EVUAV_ERR_ARGUMENT = 6    /* null handle or pointer */
} evuav_status;

EVUAV_API const char* evuav_last_error(void);
EVUAV_API const char* evuav_status_name(evuav_status status);
EVUAV_API const char* evuav_version(void);

/* Worker threads for the parallel kernels; 1 gives bitwise-reproducible runs. */
EVUAV_API evuav_status evuav_set_threads(int threads);
EVUAV_API int evuav_get_threads(void);

/* Strings and buffers handed out by the library. */
EVUAV_API void evuav_string_free(char* s);
EVUAV_API void evuav_buffer_free(void* p);

/* ---- configuration ---------------------------------------------------- */

typedef struct evuav_config evuav_config;

EVUAV_API evuav_status evuav_config_new(evuav_config** out);
EVUAV_API evuav_status evuav_config_load(const char* path, evuav_config** out);
EVUAV_API evuav_status evuav_config_parse(const char* text, evuav_config** out);
EVUAV_API evuav_status evuav_config_set(evuav_config* cfg, const char* key, const char* value);
/* "key=value" */
EVUAV_API evuav_status evuav_config_apply(evuav_config* cfg, const char* assignment);
/* Copies the value into a new string; EVUAV_ERR_VALIDATION if absent. */
EVUAV_API evuav_status evuav_config_get(const evuav_config* cfg, const char* key, char** value);
EVUAV_API evuav_status evuav_config_to_text(const evuav_config* cfg, char** text);
/* Rejects keys the command does not read. */
EVUAV_API evuav_status evuav_config_check(const evuav_config* cfg, const char* command);
/* Every key the command reads, defaults filled in. */
EVUAV_API evuav_status evuav_config_effective(const evuav_config* cfg, const char* command, evuav_config** out);
EVUAV_API void evuav_config_free(evuav_config* cfg);

/* ---- event streams ---------------------------------------------------- */

typedef struct evuav_event {
  uint64_t t; /* microseconds */
  uint16_t x;
  uint16_t y;
  int8_t pol; /* -1 or +1 */
} evuav_event;

typedef enum evuav_format { EVUAV_FORMAT_AUTO = 0, EVUAV_FORMAT_TEXT = 1, EVUAV_FORMAT_BINARY = 2 } evuav_format;

typedef struct evuav_stream evuav_stream;

/* labels may be NULL. Events are sorted by time if needed. */
EVUAV_API evuav_status evuav_stream_create(const evuav_event* events, size_t count, int width, int height,
                                           const uint8_t* labels, evuav_stream** out);
/* labels_path may be NULL; sort_warnings (may be NULL) receives the number
 * of out-of-order pairs fixed while loading. */
EVUAV_API evuav_status evuav_stream_load(const char* path, evuav_format format, const char* labels_path,
                                         evuav_stream** out, size_t* sort_warnings);
/* Writes the events and, when labels_path is non-NULL, the label file. */
EVUAV_API evuav_status evuav_stream_save(const evuav_stream* s, const char* path, evuav_format format,
                                         const char* labels_path);
/* Label file: "EVUAVLB1", u64 count, one byte per event. */
EVUAV_API evuav_status evuav_labels_save(const uint8_t* labels, size_t count, const char* path);
EVUAV_API evuav_status evuav_stream_set_labels(evuav_stream* s, const uint8_t* labels, size_t count);
EVUAV_API size_t evuav_stream_size(const evuav_stream* s);
EVUAV_API evuav_status evuav_stream_dims(const evuav_stream* s, int* width, int* height);
EVUAV_API evuav_status evuav_stream_events(const evuav_stream* s, evuav_event* out, size_t count);
EVUAV_API int evuav_stream_has_labels(const evuav_stream* s);
EVUAV_API evuav_status evuav_stream_labels(const evuav_stream* s, uint8_t* out, size_t count);
/* Events with t0 <= t < t1. */
EVUAV_API evuav_status evuav_stream_slice(const evuav_stream* s, uint64_t t0, uint64_t t1, evuav_stream** out);
EVUAV_API void evuav_stream_free(evuav_stream* s);

/* Synthetic labeled scene from the scene.* keys and seed. */
EVUAV_API evuav_status evuav_synth(const evuav_config* cfg, evuav_stream** out);

/* Mean nearest-neighbor distance per class; a value of -1 means absent. */
EVUAV_API evuav_status evuav_curve_stats(const evuav_stream* s, double us_per_px, double* target_nn,
                                         double* other_nn);

/* ---- voxel grid ------------------------------------------------------- */

typedef struct evuav_grid evuav_grid;

/* Voxel size from model.voxel_size; features are (count, polarity sum). */
EVUAV_API evuav_status evuav_voxelize(const evuav_stream* s, const evuav_config* cfg, evuav_grid** out);
EVUAV_API size_t evuav_grid_size(const evuav_grid* g);
/* key receives (ix, iy, it); features receives 2 values. */
EVUAV_API evuav_status evuav_grid_voxel(const evuav_grid* g, size_t row, int32_t key[3], double features[2]);
/* Text dump: header "voxel_size x y t t_base dims nx ny nt", then one
 * "ix iy it count polarity_sum" line per active voxel. */
EVUAV_API evuav_status evuav_grid_save(const evuav_grid* g, const char* path);
EVUAV_API void evuav_grid_free(evuav_grid* g);

/* ---- annotation ------------------------------------------------------- */

/* Labels events inside the boxes of a box file. labels must hold
 * evuav_stream_size(s) bytes. */
EVUAV_API evuav_status evuav_annotate_boxes(const evuav_stream* s, const char* box_path, uint8_t* labels,
                                            size_t count);
/* Writes frame_<index>.pgm occupancy images into dir; frames receives the count. */
EVUAV_API evuav_status evuav_annotate_export_frames(const evuav_stream* s, uint64_t delta_t_us, const char* dir,
                                                    size_t* frames);
/* Box file enclosing the stream's labeled events, grown by margin px. */
EVUAV_API evuav_status evuav_annotate_make_boxes(const evuav_stream* s, uint64_t delta_t_us, int margin,
                                                 const char* box_path);

/* ---- model ------------------------------------------------------------ */

typedef struct evuav_model evuav_model;

/* Architecture from the model.* keys, initialized from seed. */
EVUAV_API evuav_status evuav_model_create(const evuav_config* cfg, uint64_t seed, evuav_model** out);
EVUAV_API evuav_status evuav_model_load(const char* path, evuav_model** out);
/* Writes path and path.cfg. */
EVUAV_API evuav_status evuav_model_save(const evuav_model* m, const char* path);
EVUAV_API size_t evuav_model_parameter_count(const evuav_model* m);
EVUAV_API void evuav_model_free(evuav_model* m);

typedef void (*evuav_epoch_fn)(int epoch, double loss, double lr, double val_iou, void* user);

/* Trains on labeled streams with the train.* keys. val may be empty, in
 * which case the training set selects the best epoch. The model ends holding
 * the best-validation parameters; best_epoch (may be NULL) receives it. */
EVUAV_API evuav_status evuav_train(evuav_model* m, const evuav_stream* const* train, size_t n_train,
                                   const evuav_stream* const* val, size_t n_val, const evuav_config* cfg,
                                   evuav_epoch_fn on_epoch, void* user, int* best_epoch);

/* Per-event confidences; conf must hold evuav_stream_size(s) values. */
EVUAV_API evuav_status evuav_infer(const evuav_model* m, const evuav_stream* s, uint64_t window_us, double* conf,
                                   size_t count);

/* Prediction file: "EVUAVPR1", u64 count, f64 per event. */
EVUAV_API evuav_status evuav_predictions_save(const double* conf, size_t count, const char* path);
/* *conf is released with evuav_buffer_free. */
EVUAV_API evuav_status evuav_predictions_load(const char* path, double** conf, size_t* count);

/* ---- evaluation ------------------------------------------------------- */

typedef struct evuav_report {
  double iou;
  double acc;
  double pd;
  double fa;
} evuav_report;

/* Scores n labeled streams against their confidences with the eval.* keys;
 * counts are pooled over streams. text (may be NULL) receives the
 * "metric<TAB>value" report. */
EVUAV_API evuav_status evuav_eval(const evuav_stream* const* gt, const double* const* conf, size_t n,
                                  const evuav_config* cfg, evuav_report* out, char** text);

/* ---- checks and experiments ------------------------------------------- */

typedef void (*evuav_layer_fn)(const char* layer, int checked, int skipped, double max_rel_error, void* user);

/* Finite-difference check of every parameter tensor of the model.* network;
 * passed receives 1 iff every layer is below gradcheck.tolerance. */
EVUAV_API evuav_status evuav_gradcheck(const evuav_config* cfg, evuav_layer_fn on_layer, void* user, int* passed);

typedef void (*evuav_row_fn)(const char* row, void* user);

/* Runs the ablation grids; each finished row is passed as one tab-separated
 * line (see evuav_ablation_header). */
EVUAV_API evuav_status evuav_ablate(const evuav_config* cfg, evuav_row_fn on_row, void* user);
EVUAV_API const char* evuav_ablation_header(void);

#ifdef __cplusplus
}
#endif

#endif
