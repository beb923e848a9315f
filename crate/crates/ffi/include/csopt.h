#ifndef CSOPT_H
#define CSOPT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum CsoptStatus {
  CSOPT_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  CSOPT_STATUS_NULL_POINTER = 1,
  /**
   * A parameter was out of range or unsupported.
   */
  CSOPT_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A numerical routine failed to converge or produced a degenerate value.
   */
  CSOPT_STATUS_NUMERICAL = 3,
  /**
   * The library panicked; this is a bug.
   */
  CSOPT_STATUS_INTERNAL = 4,
} CsoptStatus;

/**
 * Opaque model handle.
 */
typedef struct CsoptModel CsoptModel;

/**
 * Parameters for [`csopt_model_new`].
 */
typedef struct CsoptModelParams {
  /**
   * Node density in nodes per square meter.
   */
  double density;
  double tx_power_dbm;
  double link_distance_m;
  double path_loss_exp;
  double target_sir_db;
  double control_target_sir_db;
  uint32_t initial_window;
  uint32_t max_stage;
} CsoptModelParams;

/**
 * Contention fixed point at one threshold.
 */
typedef struct CsoptContention {
  double tau;
  double busy_prob;
  double collision_prob;
} CsoptContention;

/**
 * Network state at one threshold.
 */
typedef struct CsoptSpatial {
  double threshold_dbm;
  double tau;
  double sense_range_m;
  double active_density;
  double success_prob;
  /**
   * Area spectral efficiency in bit/s/Hz/m².
   */
  double ase;
} CsoptSpatial;

/**
 * Outcome of [`csopt_optimize`].
 */
typedef struct CsoptOptimum {
  struct CsoptSpatial state;
  uint32_t outer_iterations;
  /**
   * 1 if the maximum lies on an end of the search interval.
   */
  uint8_t boundary;
  /**
   * 1 if Newton's method converged, 0 if a bracketing fallback was used.
   */
  uint8_t newton;
} CsoptOptimum;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Validates `params` and allocates a model. On success `*out` owns the
 * handle; on failure it is set to null.
 *
 * # Safety
 * `params` must point to a valid `CsoptModelParams` and `out` to writable
 * storage for one pointer.
 */
enum CsoptStatus csopt_model_new(const struct CsoptModelParams *params, struct CsoptModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle from [`csopt_model_new`] not yet freed.
 */
void csopt_model_free(struct CsoptModel *model);

/**
 * Solves the backoff fixed point at sensing threshold `threshold_dbm`.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum CsoptStatus csopt_solve_tau(const struct CsoptModel *model,
                                 double threshold_dbm,
                                 struct CsoptContention *out);

/**
 * Evaluates the area spectral efficiency at `threshold_dbm`.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum CsoptStatus csopt_ase(const struct CsoptModel *model,
                           double threshold_dbm,
                           struct CsoptSpatial *out);

/**
 * Finds the ASE-maximizing threshold over [-90 dBm, P - 0.1 dB].
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum CsoptStatus csopt_optimize(const struct CsoptModel *model, struct CsoptOptimum *out);

/**
 * Optimal sensing range when backoff is ignored. Requires α = 4.
 *
 * # Safety
 * `model` must be a live handle and `out_m` writable.
 */
enum CsoptStatus csopt_no_beb_range(const struct CsoptModel *model, double *out_m);

/**
 * Message for the most recent failure on this thread, or an empty string.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *csopt_last_error(void);

/**
 * Static name of a status code.
 */
const char *csopt_status_name(enum CsoptStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CSOPT_H */
