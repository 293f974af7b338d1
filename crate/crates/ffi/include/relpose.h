#ifndef RELPOSE_H
#define RELPOSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RpStatus {
  RP_STATUS_OK = 0,
  RP_STATUS_NULL_POINTER = 1,
  RP_STATUS_INVALID_ARGUMENT = 2,
  /**
   * No candidate correspondence survived pruning.
   */
  RP_STATUS_UNMATCHABLE = 3,
  /**
   * Too few usable candidates or a rank-deficient fit.
   */
  RP_STATUS_DEGENERATE = 4,
  RP_STATUS_PARSE_ERROR = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  RP_STATUS_PANIC = 6,
} RpStatus;

typedef enum RpMode {
  RP_MODE_NR = 0,
  RP_MODE_R = 1,
  RP_MODE_SM = 2,
  RP_MODE_R_SM = 3,
} RpMode;

/**
 * Opaque keypoint set.
 */
typedef struct RpKeypointSet RpKeypointSet;

/**
 * Opaque solver output.
 */
typedef struct RpMatchResult RpMatchResult;

/**
 * Scales of the five consistency measures.
 */
typedef struct RpGamma {
  double gamma[5];
} RpGamma;

/**
 * Solver settings; start from [`rp_solver_config_default`]. Per-round
 * scales are not exposed here.
 */
typedef struct RpSolverConfig {
  double delta;
  double alpha;
  double epsilon;
  uint32_t outer_iters;
  uint32_t irls_iters;
  uint32_t power_iters;
  double power_tol;
  double prune_threshold;
  uint32_t max_candidates;
  double select_ratio;
  /**
   * An `RpMode` value.
   */
  uint32_t mode;
} RpSolverConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next call into this library from the same thread.
 */
const char *rp_last_error_message(void);

/**
 * Builds a keypoint set from row-major arrays: `positions` and `normals`
 * hold `3 * n` values, `descriptors` holds `k * n`.
 *
 * # Safety
 * The arrays must be valid for the lengths above and `out` must be writable.
 */
enum RpStatus rp_keypoint_set_new(const double *positions,
                                  const double *normals,
                                  const double *descriptors,
                                  size_t n,
                                  size_t k,
                                  struct RpKeypointSet **out);

/**
 * Parses a keypoint set from its JSON form.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` writable.
 */
enum RpStatus rp_keypoint_set_from_json(const char *json, struct RpKeypointSet **out);

/**
 * Number of keypoints; 0 for NULL.
 *
 * # Safety
 * `set` must be NULL or a live handle.
 */
size_t rp_keypoint_set_len(const struct RpKeypointSet *set);

/**
 * # Safety
 * `set` must be NULL or a handle not yet freed.
 */
void rp_keypoint_set_free(struct RpKeypointSet *set);

struct RpGamma rp_gamma_default(void);

struct RpSolverConfig rp_solver_config_default(void);

/**
 * Estimates the pose mapping `source` onto `target`.
 *
 * # Safety
 * Handles must be live; `gamma` and `config` readable; `out` writable.
 */
enum RpStatus rp_solve(const struct RpKeypointSet *source,
                       const struct RpKeypointSet *target,
                       const struct RpGamma *gamma,
                       const struct RpSolverConfig *config,
                       struct RpMatchResult **out);

/**
 * Copies the rotation (row-major) and translation out of a result.
 *
 * # Safety
 * `result` must be live; `rotation` writable for 9 values, `translation` for 3.
 */
enum RpStatus rp_match_result_transform(const struct RpMatchResult *result,
                                        double *rotation,
                                        double *translation);

/**
 * Number of surviving candidates, which is also the indicator length.
 *
 * # Safety
 * `result` must be NULL or live.
 */
size_t rp_match_result_candidate_count(const struct RpMatchResult *result);

/**
 * Writes candidate pairs as `(source, target)` index pairs into `pairs`
 * (`2 * len` entries) and their indicator values into `indicator` (`len`
 * entries, may be NULL). `len` must equal the candidate count.
 *
 * # Safety
 * `result` must be live and the buffers sized as described.
 */
enum RpStatus rp_match_result_candidates(const struct RpMatchResult *result,
                                         size_t *pairs,
                                         double *indicator,
                                         size_t len);

/**
 * Number of selected correspondences.
 *
 * # Safety
 * `result` must be NULL or live.
 */
size_t rp_match_result_selected_count(const struct RpMatchResult *result);

/**
 * Writes the selected correspondences as index pairs (`2 * len` entries).
 *
 * # Safety
 * `result` must be live and `pairs` sized as described.
 */
enum RpStatus rp_match_result_selected(const struct RpMatchResult *result,
                                       size_t *pairs,
                                       size_t len);

/**
 * Serializes a result to JSON. Release the string with [`rp_string_free`].
 *
 * # Safety
 * `result` must be live and `out` writable.
 */
enum RpStatus rp_match_result_to_json(const struct RpMatchResult *result, char **out);

/**
 * # Safety
 * `result` must be NULL or a handle not yet freed.
 */
void rp_match_result_free(struct RpMatchResult *result);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, not yet freed.
 */
void rp_string_free(char *s);

/**
 * Geodesic distance in degrees between two row-major rotation matrices.
 *
 * # Safety
 * `a` and `b` must be readable for 9 values and `out_deg` writable.
 */
enum RpStatus rp_rotation_error_deg(const double *a, const double *b, double *out_deg);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RELPOSE_H */
