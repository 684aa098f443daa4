#ifndef KPSAMPLE_H
#define KPSAMPLE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Zero is success.
 */
typedef enum KpsStatus {
  KPS_STATUS_OK = 0,
  KPS_STATUS_NULL_POINTER = 1,
  KPS_STATUS_INVALID_ARGUMENT = 2,
  KPS_STATUS_CONFIG = 3,
  KPS_STATUS_NOT_FOUND = 4,
  KPS_STATUS_IO = 5,
  KPS_STATUS_CORRUPT = 6,
  KPS_STATUS_DIMENSION_MISMATCH = 7,
  KPS_STATUS_DEGENERATE = 8,
  KPS_STATUS_EXTERNAL = 9,
  KPS_STATUS_PANIC = 10,
} KpsStatus;

/**
 * Opaque dataset handle.
 */
typedef struct KpsDataset KpsDataset;

/**
 * Opaque per-frame pipeline handle (tracker and odometry state).
 */
typedef struct KpsPipeline KpsPipeline;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next kpsample call on the same thread.
 */
const char *kps_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *kps_version(void);

/**
 * Opens a dataset directory.
 *
 * # Safety
 * `path` must be a valid C string; `out` must be writable.
 */
enum KpsStatus kps_dataset_open(const char *path, struct KpsDataset **out);

/**
 * Number of frames, or 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or a handle from [`kps_dataset_open`].
 */
size_t kps_dataset_frame_count(const struct KpsDataset *dataset);

/**
 * # Safety
 * `dataset` must be null or a handle from [`kps_dataset_open`], not yet freed.
 */
void kps_dataset_free(struct KpsDataset *dataset);

/**
 * Creates a pipeline from TOML config text; null means all defaults.
 *
 * # Safety
 * `config_toml` must be null or a valid C string; `out` must be writable.
 */
enum KpsStatus kps_pipeline_new(const char *config_toml, struct KpsPipeline **out);

/**
 * Processes frame `index` of `dataset`. Frames must be fed in order.
 * `pose_out` receives `tx ty tz qx qy qz qw`; `sampled_out` (optional)
 * the number of registered points.
 *
 * # Safety
 * Handles must be live; `pose_out` must hold 7 doubles; `sampled_out`
 * may be null.
 */
enum KpsStatus kps_pipeline_process_frame(struct KpsPipeline *pipeline,
                                          const struct KpsDataset *dataset,
                                          size_t index,
                                          double *pose_out,
                                          size_t *sampled_out);

/**
 * # Safety
 * `pipeline` must be null or a handle from [`kps_pipeline_new`], not yet freed.
 */
void kps_pipeline_free(struct KpsPipeline *pipeline);

/**
 * Runs a whole config file and writes the reports into `out_dir`.
 *
 * # Safety
 * Arguments must be valid C strings.
 */
enum KpsStatus kps_run(const char *config_path, const char *out_dir);

/**
 * Absolute pose error between two TUM files.
 *
 * # Safety
 * Paths must be valid C strings; output pointers must be writable.
 */
enum KpsStatus kps_eval_tum(const char *est_path,
                            const char *gt_path,
                            bool align,
                            double max_dt,
                            double *trans_mean,
                            double *trans_rmse,
                            double *rot_mean_deg);

/**
 * Renders a synthetic dataset (`room`, `corridor` or `open`).
 *
 * # Safety
 * Strings must be valid C strings.
 */
enum KpsStatus kps_synth(const char *scenario, size_t frames, uint64_t seed, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KPSAMPLE_H */
