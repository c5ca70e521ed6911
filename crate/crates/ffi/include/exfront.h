#ifndef EXFRONT_H
#define EXFRONT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ExfrontStatus {
  EXFRONT_STATUS_OK = 0,
  EXFRONT_STATUS_NULL_POINTER = 1,
  EXFRONT_STATUS_INVALID_CONFIG = 2,
  EXFRONT_STATUS_WINDOW_UNDERFLOW = 3,
  EXFRONT_STATUS_INSUFFICIENT_DATA = 4,
  EXFRONT_STATUS_BUFFER_TOO_SMALL = 5,
  EXFRONT_STATUS_INTERNAL = 6,
  EXFRONT_STATUS_PANIC = 7,
} ExfrontStatus;

/**
 * Detector used by [`exfront_estimate_speeds`].
 */
typedef enum ExfrontDetector {
  EXFRONT_DETECTOR_ZERO_RANGE = 0,
  EXFRONT_DETECTOR_HOLES = 1,
} ExfrontDetector;

/**
 * Opaque simulation handle.
 */
typedef struct ExfrontSim ExfrontSim;

/**
 * Point estimates with standard errors.
 */
typedef struct ExfrontSpeeds {
  double v;
  double v_se;
  double w;
  double w_se;
  double sigma_r;
  double sigma_p;
  uint64_t cycles;
} ExfrontSpeeds;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL terminated,
 * truncated to `len`). Returns the full message length, 0 if there is none.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t exfront_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *exfront_version(void);

/**
 * Creates a simulation started from a single particle at the origin.
 *
 * # Safety
 * `out` must be null or valid for writing one pointer.
 */
enum ExfrontStatus exfront_sim_new(double rho,
                                   size_t window,
                                   uint64_t seed,
                                   struct ExfrontSim **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `sim` must be null or a handle from [`exfront_sim_new`] not yet freed.
 */
void exfront_sim_free(struct ExfrontSim *sim);

/**
 * Advances the simulation clock to `t`.
 *
 * # Safety
 * `sim` must be null or a live handle.
 */
enum ExfrontStatus exfront_sim_run_until(struct ExfrontSim *sim, double t);

/**
 * Current time, front position `r` and counter `p`. Any output may be null.
 *
 * # Safety
 * `sim` must be null or a live handle; non-null outputs must be writable.
 */
enum ExfrontStatus exfront_sim_front(const struct ExfrontSim *sim,
                                     double *time,
                                     int64_t *front,
                                     int64_t *counter);

/**
 * Occupation of the `width` sites ending at the front, front site first.
 *
 * # Safety
 * `sim` must be null or a live handle; `buf` must be valid for `len` bytes.
 */
enum ExfrontStatus exfront_sim_window(const struct ExfrontSim *sim,
                                      size_t width,
                                      uint8_t *buf,
                                      size_t len);

/**
 * Runs `replicas` independent regeneration runs and returns the ratio estimates.
 *
 * # Safety
 * `out` must be null or valid for writing one [`ExfrontSpeeds`].
 */
enum ExfrontStatus exfront_estimate_speeds(double rho,
                                           double alpha1,
                                           double alpha2,
                                           double horizon,
                                           size_t replicas,
                                           enum ExfrontDetector detector,
                                           uint64_t seed,
                                           struct ExfrontSpeeds *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EXFRONT_H */
