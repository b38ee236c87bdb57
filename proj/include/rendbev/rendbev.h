/* SPDX-License-Identifier: Apache-2.0 */
/*
 * C interface to the rendbev library. All functions return an rb_status;
 * on failure rb_last_error() describes the problem. Strings returned
 * through char** out-parameters are owned by the caller and released with
 * rb_string_free. Status values are also the command line exit codes.
 */
#ifndef RENDBEV_H
#define RENDBEV_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define RB_API
#elif defined(RENDBEV_BUILDING_LIBRARY)
#define RB_API __attribute__((visibility("default")))
#else
#define RB_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rb_status {
  RB_OK = 0,
  RB_ERR_CONFIG = 2,  /* invalid configuration or arguments */
  RB_ERR_DATA = 3,    /* missing or malformed inputs, no supervision */
  RB_ERR_NUMERIC = 4, /* non-finite values during optimization */
  RB_ERR_INTERNAL = 5
} rb_status;

typedef struct rb_config rb_config;
typedef struct rb_grid rb_grid;

/* Message of the last failure on the calling thread; never NULL. */
RB_API const char* rb_last_error(void);
RB_API const char* rb_version(void);
RB_API void rb_string_free(char* s);

/* Defaults; RENDBEV_SEED, when set, provides the scene and training seeds. */
RB_API rb_status rb_config_create(rb_config** out);
RB_API void rb_config_destroy(rb_config* cfg);
/* Overlays the keys of a JSON document onto the configuration. */
RB_API rb_status rb_config_merge_json(rb_config* cfg, const char* json_text);
RB_API rb_status rb_config_load_file(rb_config* cfg, const char* path);
RB_API rb_status rb_config_to_json(const rb_config* cfg, char** out_json);

/* Writes the synthetic sequence and its ground truth into out_dir. */
RB_API rb_status rb_gen(const rb_config* cfg, const char* out_dir);

/* Trains on the dataset in data_dir; writes bev.bin, bev_argmax.ppm/pgm,
 * loss.csv and metrics.json into out_dir. out_metrics_json may be NULL. */
RB_API rb_status rb_train(const rb_config* cfg, const char* data_dir, const char* out_dir, char** out_metrics_json);

/* Renders one ray of frame `frame` at pixel (u, v) against the grid and
 * returns its per-sample record. */
RB_API rb_status rb_trace_ray(const rb_config* cfg, const char* data_dir, const rb_grid* grid, int frame, double u,
                              double v, char** out_json);

/* pred: BEV grid binary or label PGM; gt: label PGM. out_path may be NULL. */
RB_API rb_status rb_eval(const char* pred_path, const char* gt_path, const char* out_path, char** out_metrics_json);

/* Writes bev_ipm.pgm/ppm for the reference frame of data_dir. */
RB_API rb_status rb_ipm(const char* data_dir, const char* out_dir);

/* Finite-difference check of the analytic gradient. When grid_path is not
 * NULL its logits replace the random ones. out_path may be NULL. */
RB_API rb_status rb_gradcheck(const rb_config* cfg, int probes, double h, int patches, const char* grid_path,
                              const char* out_path, char** out_report_json);

/* axis: "patches", "tau" or "m". Writes one CSV row per value and seed. */
RB_API rb_status rb_sweep(const rb_config* cfg, const char* data_dir, const char* axis, const double* values,
                          size_t n_values, const uint64_t* seeds, size_t n_seeds, const char* out_csv);

/* Runs the three frame-policy configurations; writes ablation.csv into
 * out_dir and returns a printable table. */
RB_API rb_status rb_ablate(const rb_config* cfg, const char* data_dir, const char* out_dir, char** out_table);

RB_API rb_status rb_grid_load(const char* path, rb_grid** out);
RB_API void rb_grid_destroy(rb_grid* grid);
RB_API rb_status rb_grid_shape(const rb_grid* grid, int* rows, int* cols, int* classes);
/* Per-cell argmax, row 0 nearest; `out` holds rows*cols bytes. */
RB_API rb_status rb_grid_argmax(const rb_grid* grid, uint8_t* out, size_t out_len);

#ifdef __cplusplus
}
#endif

#endif /* RENDBEV_H */
