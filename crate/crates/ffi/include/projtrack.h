#ifndef PROJTRACK_H
#define PROJTRACK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PtStatus {
  PT_STATUS_OK = 0,
  PT_STATUS_NULL_POINTER = 1,
  PT_STATUS_FORMAT = 2,
  PT_STATUS_PARSE = 3,
  PT_STATUS_CONTRACT = 4,
  PT_STATUS_DOMAIN = 5,
  PT_STATUS_DEGENERATE = 6,
  PT_STATUS_NO_DEPTH = 7,
  PT_STATUS_UNDEFINED_METRIC = 8,
  PT_STATUS_INPUT = 9,
  PT_STATUS_GENERATION = 10,
  PT_STATUS_IO = 11,
  PT_STATUS_JSON = 12,
  PT_STATUS_PANIC = 13,
} PtStatus;

typedef enum PtTrackState {
  PT_TRACK_STATE_TENTATIVE = 0,
  PT_TRACK_STATE_CONFIRMED = 1,
  PT_TRACK_STATE_DEAD = 2,
} PtTrackState;

/**
 * Opaque tracker handle.
 */
typedef struct PtTracker PtTracker;

typedef struct PtFrameCounts {
  uint64_t frame;
  uint64_t false_negatives;
  uint64_t false_positives;
  uint64_t id_switches;
  uint64_t ground_truth;
} PtFrameCounts;

/**
 * A lifted detection. `class_id` is 0..=6 (car, bicycle, people, truck,
 * bus, tricycle, moto).
 */
typedef struct PtObservation {
  double plane_x;
  double plane_y;
  double world_x;
  double world_y;
  double world_z;
  uint8_t class_id;
  double confidence;
} PtObservation;

typedef struct PtTrackInfo {
  uint64_t id;
  uint8_t class_id;
  enum PtTrackState state;
  uint32_t hits;
  uint64_t last_frame;
  double plane_x;
  double plane_y;
} PtTrackInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len - 1` bytes) and returns the full message
 * length in bytes, excluding the terminator.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t pt_last_error_message(char *buf, size_t len);

/**
 * Row-major 3x3 rotation matrix of the quaternion `q = [w, x, y, z]`
 * (normalized first).
 *
 * # Safety
 * `q` must point to 4 doubles and `out` to 9 writable doubles.
 */
enum PtStatus pt_quat_to_matrix(const double *q, double *out);

/**
 * Projector-frame point hit by the beam at angles `(horizontal, pitch)`
 * (radians) and depth `distance` (mm).
 *
 * # Safety
 * `out` must point to 3 writable doubles.
 */
enum PtStatus pt_galvo_project(double mirror_separation,
                               double horizontal,
                               double pitch,
                               double distance,
                               double *out);

/**
 * Mirror angles `[horizontal, pitch]` that hit a projector-frame point.
 *
 * # Safety
 * `p` must point to 3 doubles and `out` to 2 writable doubles.
 */
enum PtStatus pt_galvo_invert(double mirror_separation, const double *p, double *out);

/**
 * Least-squares rigid transform taking `world[i]` to `projector[i]`.
 * Points are packed `x, y, z` triples. Writes the canonical quaternion
 * `[w, x, y, z]`, the translation and the RMS residual (mm).
 *
 * # Safety
 * `world` and `projector` must point to `3 * n` doubles; `quat_out`,
 * `translation_out` and `rms_out` to 4, 3 and 1 writable doubles.
 */
enum PtStatus pt_solve_absolute_orientation(const double *world,
                                            const double *projector,
                                            size_t n,
                                            double *quat_out,
                                            double *translation_out,
                                            double *rms_out);

/**
 * Retinex enhancement of a row-major 8-bit grayscale image into `out`
 * (same size).
 *
 * # Safety
 * `pixels` must point to `width * height` bytes and `out` to as many
 * writable bytes.
 */
enum PtStatus pt_enhance(const uint8_t *pixels,
                         size_t width,
                         size_t height,
                         size_t passes_per_level,
                         double log_offset,
                         uint8_t *out);

/**
 * MOTA percentage over per-frame counts.
 *
 * # Safety
 * `frames` must point to `n` structs and `out` to one writable double.
 */
enum PtStatus pt_mota(const struct PtFrameCounts *frames, size_t n, double *out);

/**
 * MOTA of a hypothesis MOT CSV file against a ground-truth file, matching
 * world positions on the ground plane within `threshold_mm`.
 *
 * # Safety
 * Paths must be NUL-terminated UTF-8; `out` must point to one writable
 * double.
 */
enum PtStatus pt_evaluate_files(const char *gt_path,
                                const char *hyp_path,
                                double threshold_mm,
                                double *out);

/**
 * Creates a tracker, or returns null (with the error message set) when the
 * parameters are invalid.
 */
struct PtTracker *pt_tracker_new(double gate_mm, uint32_t min_hits, uint32_t max_misses);

/**
 * Releases a tracker. Null is ignored.
 *
 * # Safety
 * `t` must be null or a handle from [`pt_tracker_new`] not yet freed.
 */
void pt_tracker_free(struct PtTracker *t);

/**
 * Advances the tracker to `frame` with `n` observations.
 *
 * # Safety
 * `t` must be a live handle; `obs` must point to `n` structs (or be null
 * when `n` is 0).
 */
enum PtStatus pt_tracker_step(struct PtTracker *t,
                              uint64_t frame,
                              const struct PtObservation *obs,
                              size_t n);

/**
 * Number of live (tentative or confirmed) tracks.
 *
 * # Safety
 * `t` must be null or a live handle.
 */
size_t pt_tracker_live_count(const struct PtTracker *t);

/**
 * Copies up to `cap` live tracks (ordered by id) into `out` and stores the
 * number written in `written`.
 *
 * # Safety
 * `t` must be a live handle, `out` must point to `cap` writable structs
 * and `written` to one writable `size_t`.
 */
enum PtStatus pt_tracker_live_tracks(const struct PtTracker *t,
                                     struct PtTrackInfo *out,
                                     size_t cap,
                                     size_t *written);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PROJTRACK_H */
