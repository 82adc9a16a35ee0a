#ifndef ACTORGRAPH_H
#define ACTORGRAPH_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every API call.
 */
typedef enum AgStatus {
  AG_STATUS_OK = 0,
  AG_STATUS_NULL_ARGUMENT = 1,
  AG_STATUS_INVALID_ARGUMENT = 2,
  AG_STATUS_IO = 3,
  AG_STATUS_FORMAT = 4,
  AG_STATUS_CONFIG = 5,
  AG_STATUS_NON_FINITE = 6,
  AG_STATUS_SHAPE = 7,
  /**
   * The stream has no further frames.
   */
  AG_STATUS_END_OF_STREAM = 8,
  AG_STATUS_BUFFER_TOO_SMALL = 9,
  AG_STATUS_PANIC = 10,
} AgStatus;

/**
 * Opaque engine configuration.
 */
typedef struct AgConfig AgConfig;

/**
 * Opaque decoded frame.
 */
typedef struct AgFrame AgFrame;

/**
 * Opaque reader over a feature stream file.
 */
typedef struct AgStream AgStream;

typedef struct AgStreamDims {
  uint32_t channels;
  uint32_t height;
  uint32_t width;
  uint32_t feature_dim;
} AgStreamDims;

/**
 * Metric summary.
 */
typedef struct AgReport {
  double group_activity_mca;
  double group_activity_accuracy;
  double action_detection_map;
  double membership_accuracy;
  double social_activity_accuracy;
  double video_map;
} AgReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *ag_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *ag_version(void);

/**
 * Creates a configuration holding the defaults.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum AgStatus ag_config_new(struct AgConfig **out);

/**
 * Reads a `key=value` config file.
 *
 * # Safety
 * `path` must be a NUL-terminated string, `out` a valid pointer.
 */
enum AgStatus ag_config_read(const char *path, struct AgConfig **out);

/**
 * # Safety
 * `config` must come from this API and not be used afterwards; null is ignored.
 */
void ag_config_free(struct AgConfig *config);

/**
 * Sets one key from its text form; the config is validated afterwards and
 * left unchanged on failure.
 *
 * # Safety
 * `config` must be a live handle; `key` and `value` NUL-terminated strings.
 */
enum AgStatus ag_config_set(struct AgConfig *config, const char *key, const char *value);

/**
 * Writes the text form of one key into `buf`. `needed` (nullable) receives
 * the size including the NUL.
 *
 * # Safety
 * `config` must be a live handle, `key` NUL-terminated, `buf` writable for `len` bytes.
 */
enum AgStatus ag_config_get(const struct AgConfig *config,
                            const char *key,
                            char *buf,
                            size_t len,
                            size_t *needed);

/**
 * Opens a stream file and validates its header.
 *
 * # Safety
 * `path` must be NUL-terminated, `out` a valid pointer.
 */
enum AgStatus ag_stream_open(const char *path, struct AgStream **out);

/**
 * # Safety
 * `stream` must be a live handle and `dims` a valid pointer.
 */
enum AgStatus ag_stream_dims(const struct AgStream *stream, struct AgStreamDims *dims);

/**
 * Decodes the next frame. Returns `EndOfStream` (and a null frame) after
 * the last one.
 *
 * # Safety
 * `stream` must be a live handle and `frame` a valid pointer.
 */
enum AgStatus ag_stream_next(struct AgStream *stream, struct AgFrame **frame);

/**
 * # Safety
 * `stream` must come from this API; null is ignored.
 */
void ag_stream_close(struct AgStream *stream);

/**
 * # Safety
 * `frame` must come from this API; null is ignored.
 */
void ag_frame_free(struct AgFrame *frame);

/**
 * Frame index and ROI count.
 *
 * # Safety
 * `frame` must be a live handle; outputs must be valid pointers.
 */
enum AgStatus ag_frame_info(const struct AgFrame *frame, uint32_t *frame_index, uint32_t *n_rois);

/**
 * One ROI: box `[x1, y1, x2, y2]`, score and class id.
 *
 * # Safety
 * `frame` must be a live handle, `bbox` writable for 4 floats, other outputs valid.
 */
enum AgStatus ag_frame_roi(const struct AgFrame *frame,
                           uint32_t index,
                           float *bbox,
                           float *score,
                           uint32_t *class_id);

/**
 * Copies the global map (`C·H·W` floats, channel-major) into `buf`.
 *
 * # Safety
 * `frame` must be a live handle and `buf` writable for `len` floats.
 */
enum AgStatus ag_frame_global_map(const struct AgFrame *frame, float *buf, size_t len);

/**
 * Minimum-cost assignment of a row-major `rows × cols` cost matrix.
 * `assignment[r]` receives the column of row `r`, or -1 when the row is
 * unassigned (more rows than columns).
 *
 * # Safety
 * `cost` must hold `rows·cols` doubles and `assignment` `rows` slots.
 */
enum AgStatus ag_hungarian(const double *cost, size_t rows, size_t cols, int64_t *assignment);

/**
 * Writes a synthetic corpus of walking and queueing scenes (two social
 * groups each) to `out_dir` as `<video>.mapf` plus `<video>.gt.txt`.
 *
 * # Safety
 * `out_dir` must be NUL-terminated.
 */
enum AgStatus ag_synth(const char *out_dir,
                       uint32_t videos_per_template,
                       uint32_t frames,
                       float noise,
                       uint64_t seed);

/**
 * Trains in one pass over `n_streams` stream files and writes a checkpoint.
 * `config` may be null for the defaults. `frames_read` (nullable) receives
 * the number of frames consumed.
 *
 * # Safety
 * `streams` must hold `n_streams` NUL-terminated paths.
 */
enum AgStatus ag_train(const struct AgConfig *config,
                       const char *const *streams,
                       size_t n_streams,
                       const char *checkpoint_out,
                       uint64_t *frames_read);

/**
 * Labels streams with a trained checkpoint and writes a prediction file.
 * `config` may be null to use the checkpoint's own configuration.
 *
 * # Safety
 * String arguments must be NUL-terminated; `streams` holds `n_streams` paths.
 */
enum AgStatus ag_infer(const char *checkpoint,
                       const struct AgConfig *config,
                       const char *const *streams,
                       size_t n_streams,
                       const char *predictions_out);

/**
 * Scores a prediction file against ground-truth files (videos are named by
 * file stem).
 *
 * # Safety
 * String arguments must be NUL-terminated; `report` must be a valid pointer.
 */
enum AgStatus ag_eval(const char *predictions,
                      const char *const *truths,
                      size_t n_truths,
                      struct AgReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ACTORGRAPH_H */
