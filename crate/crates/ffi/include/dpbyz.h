#ifndef DPBYZ_H
#define DPBYZ_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Aggregation rules.
 */
typedef enum DpbyzGar {
  DPBYZ_GAR_AVERAGE = 0,
  DPBYZ_GAR_MDA = 1,
  DPBYZ_GAR_KRUM = 2,
  DPBYZ_GAR_BULYAN = 3,
  DPBYZ_GAR_MEDIAN = 4,
  DPBYZ_GAR_MEAMED = 5,
  DPBYZ_GAR_PHOCAS = 6,
  DPBYZ_GAR_TRIMMED_MEAN = 7,
} DpbyzGar;

/*
 Status codes. Zero is success.
 */
typedef enum DpbyzStatus {
  DPBYZ_STATUS_OK = 0,
  DPBYZ_STATUS_PARAMETER = 1,
  DPBYZ_STATUS_PRECONDITION = 2,
  DPBYZ_STATUS_UNSUPPORTED = 3,
  DPBYZ_STATUS_PARSE = 4,
  DPBYZ_STATUS_STATE = 5,
  DPBYZ_STATUS_CONFIG = 6,
  DPBYZ_STATUS_IO = 7,
  DPBYZ_STATUS_NULL_POINTER = 8,
  DPBYZ_STATUS_BUFFER_TOO_SMALL = 9,
  DPBYZ_STATUS_PANIC = 10,
} DpbyzStatus;

/*
 Opaque training run.
 */
typedef struct DpbyzSimulation DpbyzSimulation;

/*
 Result of [`dpbyz_feasibility`].
 */
typedef struct DpbyzFeasibility {
  double c_constant;
  double threshold;
  double inverse_kf;
  bool vn_can_hold;
  /*
   Relaxed per-family necessary condition.
   */
  bool table1_condition;
  /*
   Zero when no batch size up to the cap works.
   */
  uint64_t min_batch;
  /*
   Negative when no admissible `f` works.
   */
  double max_byz_fraction;
} DpbyzFeasibility;

/*
 Input of [`dpbyz_upper_bound`].
 */
typedef struct DpbyzRateQuery {
  double mu;
  double lambda;
  double alpha;
  double c;
  double sigma;
  uint64_t b;
  uint64_t d;
  uint64_t steps;
  double noise_std;
  double g_max;
} DpbyzRateQuery;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Copies the last error message of this thread into `buf` (NUL-terminated,
 truncated to `len` bytes) and returns the full message length in bytes.
 */
size_t dpbyz_last_error(char *buf, size_t len);

/*
 Library version as a static NUL-terminated string.
 */
const char *dpbyz_version(void);

/*
 VN-ratio constant `k_F(n, f)`; infinite for MDA with `f = 0`.
 */
enum DpbyzStatus dpbyz_kf(enum DpbyzGar gar, size_t n, size_t f, double *out_kf);

/*
 Gaussian-mechanism calibration.
 */
enum DpbyzStatus dpbyz_calibrate(double epsilon,
                                 double delta,
                                 double g_max,
                                 size_t batch_size,
                                 double *out_sensitivity,
                                 double *out_noise_std);

/*
 Aggregates `n` row-major reports of dimension `d` into `out_aggregate`
 (length `d`).
 */
enum DpbyzStatus dpbyz_aggregate(enum DpbyzGar gar,
                                 size_t n,
                                 size_t f,
                                 size_t d,
                                 const double *reports,
                                 double *out_aggregate);

/*
 Exact VN-ratio feasibility plus the relaxed necessary condition.
 */
enum DpbyzStatus dpbyz_feasibility(enum DpbyzGar gar,
                                   size_t n,
                                   size_t f,
                                   uint64_t batch_size,
                                   uint64_t dim,
                                   double epsilon,
                                   double delta,
                                   struct DpbyzFeasibility *out_result);

/*
 Upper convergence-rate bound.
 */
enum DpbyzStatus dpbyz_upper_bound(const struct DpbyzRateQuery *query, double *out_bound);

/*
 Lower convergence-rate bound.
 */
enum DpbyzStatus dpbyz_lower_bound(double sigma,
                                   uint64_t b,
                                   uint64_t d,
                                   uint64_t steps,
                                   double noise_std,
                                   double *out_bound);

/*
 Creates a simulation from configuration text that expands to exactly one
 experiment. `seed` replaces the configured master seed.
 */
enum DpbyzStatus dpbyz_simulation_new(const char *config_text,
                                      uint64_t seed,
                                      struct DpbyzSimulation **out_handle);

/*
 Releases a handle. Null is ignored.
 */
void dpbyz_simulation_free(struct DpbyzSimulation *h);

/*
 Advances one step. `out_running` is false once the run has finished or
 diverged.
 */
enum DpbyzStatus dpbyz_simulation_step(struct DpbyzSimulation *h, bool *out_running);

/*
 Runs the remaining steps.
 */
enum DpbyzStatus dpbyz_simulation_run(struct DpbyzSimulation *h);

/*
 Completed steps and, when non-null, the step at which the run diverged
 (`-1` when it did not).
 */
enum DpbyzStatus dpbyz_simulation_progress(struct DpbyzSimulation *h,
                                           uint64_t *out_steps,
                                           int64_t *out_diverged_at);

/*
 Current model parameters (weights then bias).
 */
enum DpbyzStatus dpbyz_simulation_params(struct DpbyzSimulation *h,
                                         double *buf,
                                         size_t len,
                                         size_t *out_len);

/*
 Per-step training losses recorded so far.
 */
enum DpbyzStatus dpbyz_simulation_losses(struct DpbyzSimulation *h,
                                         double *buf,
                                         size_t len,
                                         size_t *out_len);

/*
 Test accuracies recorded so far, in evaluation order.
 */
enum DpbyzStatus dpbyz_simulation_accuracies(struct DpbyzSimulation *h,
                                             double *buf,
                                             size_t len,
                                             size_t *out_len);

/*
 Writes the metrics recorded so far as CSV.
 */
enum DpbyzStatus dpbyz_simulation_write_csv(struct DpbyzSimulation *h, const char *path);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* DPBYZ_H */
