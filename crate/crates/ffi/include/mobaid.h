#ifndef MOBAID_H
#define MOBAID_H

/* Generated by cbindgen from the mobaid-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code returned by every fallible function.
typedef enum {
  MOBAID_STATUS_OK = 0,
  // A required pointer argument was null.
  MOBAID_STATUS_NULL_POINTER = 1,
  // A string argument was not valid UTF-8.
  MOBAID_STATUS_INVALID_UTF8 = 2,
  // Inconsistent configuration or mismatched inputs.
  MOBAID_STATUS_CONFIG = 3,
  // Not enough data to run an estimator.
  MOBAID_STATUS_INSUFFICIENT_DATA = 4,
  // RANSAC could not find a supported ground plane.
  MOBAID_STATUS_NO_PLANE_FOUND = 5,
  // A metric box center was too close to (or behind) the camera.
  MOBAID_STATUS_DEGENERATE_PROJECTION = 6,
  // A projected box lies entirely outside the image.
  MOBAID_STATUS_NOTHING_VISIBLE = 7,
  // A matrix that must be invertible was numerically singular.
  MOBAID_STATUS_NUMERIC = 8,
  // A belief update produced all-zero mass.
  MOBAID_STATUS_MODEL_DEGENERATE = 9,
  // The classifier failed on a frame.
  MOBAID_STATUS_SCORER = 10,
  // Malformed TOML, JSONL or model text.
  MOBAID_STATUS_PARSE = 11,
  // File system failure.
  MOBAID_STATUS_IO = 12,
  // An internal panic was caught at the boundary.
  MOBAID_STATUS_PANIC = 13,
} MobaidStatus;

// Proposal front end bound to one camera: ground removal, clustering and
// per-segment template sliding.
typedef struct MobaidProposer MobaidProposer;

// Multi-person tracker: Kalman position/velocity filters plus a per-track
// class belief.
typedef struct MobaidTracker MobaidTracker;

// Pinhole camera intrinsics and the valid depth range.
typedef struct {
  double fx;
  double fy;
  double cx;
  double cy;
  uint32_t width;
  uint32_t height;
  double min_depth_m;
  double max_depth_m;
} MobaidCamera;

// One region proposal: a pixel box plus the segment and template that
// produced it. Box edges are half open, `[u_min, u_max) x [v_min, v_max)`.
typedef struct {
  double u_min;
  double v_min;
  double u_max;
  double v_max;
  uint32_t segment;
  uint32_t template_;
} MobaidBox;

// One classified ground-plane observation fed to the tracker.
typedef struct {
  // World ground-plane position, meters.
  double x;
  double y;
  // Person class index: 0 pedestrian, 1 wheelchair, 2 push_wheelchair,
  // 3 crutches, 4 walker.
  uint32_t class_;
} MobaidObservation;

// The camera's ground-plane pose, for field-of-view tests.
typedef struct {
  // Camera position on the ground plane, meters.
  double x;
  double y;
  // Unit-ish forward direction on the ground plane (normalized inside).
  double forward_x;
  double forward_y;
} MobaidCameraPose;

// One track snapshot.
typedef struct {
  uint64_t id;
  // Ground-plane position estimate, meters.
  double x;
  double y;
  // Ground-plane velocity estimate, meters per second.
  double vx;
  double vy;
  // Positional uncertainty (root mean marginal variance), meters.
  double sigma_pos;
  // Belief argmax: person class index 0-4, or 5 for clutter.
  uint32_t class_;
  // Class belief, ordered as the class indices above; sums to one.
  double belief[6];
  // Consecutive frames since the last matched detection.
  uint32_t frames_since_observation;
} MobaidTrack;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static null-terminated string.
const char *mobaid_version(void);

// Message for the most recent failure on the calling thread, or an empty
// string. The pointer stays valid until the next failing call on the same
// thread.
const char *mobaid_last_error(void);

// Short name of a status code (e.g. "ok", "parse_error").
const char *mobaid_status_name(MobaidStatus status);

// Creates a proposer for one camera. `config_toml` is pipeline
// configuration TOML (the `[detector.proposer]` tables apply); pass null
// for defaults. On success writes the handle to `out`.
//
// # Safety
// `camera` and `out` must be valid pointers; `config_toml` must be null or
// a null-terminated string.
MobaidStatus mobaid_proposer_new(const MobaidCamera *camera,
                                 const char *config_toml,
                                 MobaidProposer **out);

// Releases a proposer. Null is a no-op.
//
// # Safety
// `proposer` must be null or a pointer from [`mobaid_proposer_new`] that
// has not been freed yet.
void mobaid_proposer_free(MobaidProposer *proposer);

// Generates proposals for one depth frame.
//
// `depth_mm` is row-major depth in millimeters (0 = invalid) and must hold
// exactly `width * height` samples for the proposer's camera. `seed`
// drives the RANSAC plane fit. On success `*out_boxes`/`*out_count`
// receive an array owned by the library; release it with
// [`mobaid_boxes_free`]. The array is empty (possibly null) when nothing
// was found.
//
// # Safety
// `proposer`, `depth_mm`, `out_boxes` and `out_count` must be valid
// pointers and `depth_mm` must span `depth_len` readable samples.
MobaidStatus mobaid_proposer_propose(const MobaidProposer *proposer,
                                     const uint16_t *depth_mm,
                                     size_t depth_len,
                                     double timestamp_s,
                                     uint64_t seed,
                                     MobaidBox **out_boxes,
                                     size_t *out_count);

// Releases an array from [`mobaid_proposer_propose`]. Null is a no-op.
//
// # Safety
// `boxes`/`count` must be exactly the pair a successful call produced.
void mobaid_boxes_free(MobaidBox *boxes, size_t count);

// Creates a tracker. `config_toml` is pipeline configuration TOML (the
// `[tracker]` and `[fov]` tables apply; null for defaults). `hmm_text` is
// a belief model in the library's text format; null for the built-in
// person model. On success writes the handle to `out`.
//
// # Safety
// `out` must be a valid pointer; the strings must be null or
// null-terminated.
MobaidStatus mobaid_tracker_new(const char *config_toml, const char *hmm_text, MobaidTracker **out);

// Releases a tracker. Null is a no-op.
//
// # Safety
// `tracker` must be null or a pointer from [`mobaid_tracker_new`] that has
// not been freed yet.
void mobaid_tracker_free(MobaidTracker *tracker);

// Advances the tracker by one frame.
//
// `observations` may be null when `count` is zero. `dt_s` is the elapsed
// time since the previous step (0 for the first). `pose` is the camera's
// current ground pose; tracks outside its viewing cone receive no implicit
// background evidence.
//
// # Safety
// `tracker` and `pose` must be valid pointers; `observations` must span
// `count` readable elements (or be null with `count` zero).
MobaidStatus mobaid_tracker_step(MobaidTracker *tracker,
                                 const MobaidObservation *observations,
                                 size_t count,
                                 double dt_s,
                                 uint64_t frame,
                                 const MobaidCameraPose *pose);

// Snapshots the live tracks, ascending by id. On success the array is
// owned by the library; release it with [`mobaid_tracks_free`]. The array
// is empty (possibly null) when no tracks are alive.
//
// # Safety
// All pointers must be valid.
MobaidStatus mobaid_tracker_tracks(const MobaidTracker *tracker,
                                   MobaidTrack **out_tracks,
                                   size_t *out_count);

// Releases an array from [`mobaid_tracker_tracks`]. Null is a no-op.
//
// # Safety
// `tracks`/`count` must be exactly the pair a successful call produced.
void mobaid_tracks_free(MobaidTrack *tracks, size_t count);

// Runs the full pipeline over an on-disk sequence directory, writing
// detections/tracks/guidance logs and stats into `out_dir` (created if
// missing). `config_toml` is configuration TOML text (null for defaults);
// `seed` drives the proposal front end and the scorer.
//
// # Safety
// `seq_dir` and `out_dir` must be null-terminated strings; `config_toml`
// must be null or null-terminated.
MobaidStatus mobaid_run(const char *seq_dir,
                        const char *out_dir,
                        const char *config_toml,
                        uint64_t seed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOBAID_H */
