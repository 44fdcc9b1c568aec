#ifndef BYZSGD_H
#define BYZSGD_H

/* Generated by cbindgen from the byzsgd-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Outcome of a C API call.
typedef enum ByzsgdStatus {
  // The call succeeded.
  BYZSGD_STATUS_OK = 0,
  // A required pointer argument was null.
  BYZSGD_STATUS_NULL_POINTER = 1,
  // A string argument was not valid UTF-8.
  BYZSGD_STATUS_INVALID_UTF8 = 2,
  // The configuration was malformed or violated an invariant.
  BYZSGD_STATUS_INVALID_CONFIG = 3,
  // The run or query failed; see `byzsgd_last_error_message`.
  BYZSGD_STATUS_RUNTIME_ERROR = 4,
  // An index argument was out of range.
  BYZSGD_STATUS_OUT_OF_RANGE = 5,
} ByzsgdStatus;

// Opaque, resolved experiment configuration.
typedef struct ByzsgdConfig ByzsgdConfig;

// Opaque result of a completed run.
typedef struct ByzsgdRun ByzsgdRun;

// One per-tick metrics record, mirroring the CSV schema.
typedef struct ByzsgdTickRow {
  // Tick index, starting at 0.
  uint64_t tick;
  // Simulated global time of the tick.
  double time;
  // Id of the worker that woke up.
  uint64_t worker;
  // True when that worker is Byzantine.
  bool byzantine;
  // Peer vectors the worker accepted (0 for Byzantine ticks).
  uint64_t accepted_count;
  // Whether `sum_sq_dist` carries a value (quadratic runs only).
  bool has_sum_sq_dist;
  // Summed squared honest distance to the optimum after the tick.
  double sum_sq_dist;
} ByzsgdTickRow;

// Constants of the closed-form convergence bounds.
typedef struct ByzsgdBoundParams {
  // Step size.
  double eta;
  // Strong-convexity constant.
  double lambda;
  // Gradient Lipschitz constant.
  double l;
  // Uniform bound on stochastic gradient norms.
  double g;
  // Per-update gradient noise scale.
  double sigma;
  // Distance-threshold bound of the descent rule.
  double delta;
  // Total worker count.
  uint64_t n;
  // Assumed Byzantine worker count.
  uint64_t p;
  // Summed squared distance to the optimum at initialization.
  double sum_sq_init;
  // Summed distance to the optimum at initialization.
  double sum_init;
} ByzsgdBoundParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string; do not free.
const char *byzsgd_version(void);

// Message of the most recent failure on this thread, or null if there was
// none. The caller owns the returned string and must release it with
// [`byzsgd_string_free`].
char *byzsgd_last_error_message(void);

// Release a string returned by this library.
//
// # Safety
// `s` must be null or a pointer previously returned by a `byzsgd_*`
// function that transfers string ownership, not yet freed.
void byzsgd_string_free(char *s);

// Build a configuration from flat JSON (the CLI config-file schema).
// Missing fields take their documented defaults; the `BYZSGD_DATA_DIR`
// environment variable supplies the dataset directory when the JSON does
// not. On success writes a handle to `out`; release it with
// [`byzsgd_config_free`].
//
// # Safety
// `json` must be a valid NUL-terminated string and `out` a valid pointer;
// both must stay alive for the duration of the call.
enum ByzsgdStatus byzsgd_config_from_json(const char *json, struct ByzsgdConfig **out);

// Serialize a configuration back to flat JSON. The caller owns the
// returned string and must release it with [`byzsgd_string_free`].
// Returns null if `config` is null.
//
// # Safety
// `config` must be null or a live handle from [`byzsgd_config_from_json`].
char *byzsgd_config_to_json(const struct ByzsgdConfig *config);

// Release a configuration handle.
//
// # Safety
// `config` must be null or a handle from [`byzsgd_config_from_json`],
// not yet freed.
void byzsgd_config_free(struct ByzsgdConfig *config);

// Run the configured experiment to completion. Loads the dataset, plays
// every tick, and on success writes a run handle to `out`; release it
// with [`byzsgd_run_free`]. Deterministic: the same configuration always
// produces the same run.
//
// # Safety
// `config` must be a live configuration handle and `out` a valid pointer.
enum ByzsgdStatus byzsgd_run(const struct ByzsgdConfig *config, struct ByzsgdRun **out);

// Release a run handle.
//
// # Safety
// `run` must be null or a handle from [`byzsgd_run`], not yet freed.
void byzsgd_run_free(struct ByzsgdRun *run);

// Number of per-tick records in a run; 0 if `run` is null.
//
// # Safety
// `run` must be null or a live run handle.
uint64_t byzsgd_run_num_ticks(const struct ByzsgdRun *run);

// Copy the per-tick record at `index` into `out`.
//
// # Safety
// `run` must be a live run handle and `out` a valid pointer.
enum ByzsgdStatus byzsgd_run_tick_row(const struct ByzsgdRun *run,
                                      uint64_t index,
                                      struct ByzsgdTickRow *out);

// Mean final test accuracy over honest workers. Fails with
// `RUNTIME_ERROR` on problems that have no accuracy notion.
//
// # Safety
// `run` must be a live run handle and `out` a valid pointer.
enum ByzsgdStatus byzsgd_run_mean_honest_accuracy(const struct ByzsgdRun *run, double *out);

// Write the run's per-tick metrics CSV
// (`tick,time,worker,role,accepted_count,sum_sq_dist`) to `path`.
//
// # Safety
// `run` must be a live run handle and `path` a valid NUL-terminated
// string.
enum ByzsgdStatus byzsgd_run_write_metrics_csv(const struct ByzsgdRun *run, const char *path);

// Evaluate the convergence bound of the closest-vectors rule at tick `t`
// and write it to `out`. Uses `eta`, `lambda`, `g`, `sigma`, `n`, `p`,
// and `sum_sq_init` from `params`.
//
// # Safety
// `params` and `out` must be valid pointers.
enum ByzsgdStatus byzsgd_theorem1_bound(const struct ByzsgdBoundParams *params,
                                        uint64_t t,
                                        double *out);

// Evaluate the convergence bound of the descent-threshold rule at tick
// `t` and write it to `out`. Uses `eta`, `lambda`, `l`, `delta`, `n`,
// `p`, and `sum_init` from `params`.
//
// # Safety
// `params` and `out` must be valid pointers.
enum ByzsgdStatus byzsgd_theorem2_bound(const struct ByzsgdBoundParams *params,
                                        uint64_t t,
                                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BYZSGD_H */
