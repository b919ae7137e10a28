#ifndef NLL_H
#define NLL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NllBoundary {
  // Constant states `u_minus` left and `u_plus` right of the grid.
  NLL_BOUNDARY_FAR_FIELD = 0,
  NLL_BOUNDARY_PERIODIC = 1,
} NllBoundary;

typedef enum NllEngine {
  NLL_ENGINE_AUTO = 0,
  NLL_ENGINE_DIRECT = 1,
  NLL_ENGINE_FFT = 2,
  NLL_ENGINE_EXPONENTIAL_RECURSION = 3,
} NllEngine;

typedef enum NllStatus {
  NLL_STATUS_OK = 0,
  NLL_STATUS_NULL_POINTER = 1,
  NLL_STATUS_INVALID_ARGUMENT = 2,
  // The output buffer is too short; the required length was written.
  NLL_STATUS_BUFFER_TOO_SMALL = 3,
  NLL_STATUS_DOMAIN = 4,
  NLL_STATUS_CONFIG = 5,
  NLL_STATUS_UNSUPPORTED = 6,
  NLL_STATUS_ABORTED = 7,
  NLL_STATUS_IO = 8,
  NLL_STATUS_PARSE = 9,
  NLL_STATUS_PANIC = 10,
} NllStatus;

// A kernel discretised for one `(epsilon, dx)`.
typedef struct NllKernel NllKernel;

// A completed single run.
typedef struct NllTrace NllTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *nll_version(void);

// Message of the last failed call on this thread, or an empty string.
// Valid until the next call into the library from the same thread.
const char *nll_last_error(void);

// Discretises kernel `id` (`exponential`, `truncated_linear`,
// `indicator`, `gaussian_even`) at scale `epsilon` on spacing `dx`.
//
// # Safety
// `id` must be a NUL-terminated string; `out` must be writable.
enum NllStatus nll_kernel_new(const char *id, double epsilon, double dx, struct NllKernel **out);

// # Safety
// `k` must come from [`nll_kernel_new`] and not be used afterwards. Null is ignored.
void nll_kernel_free(struct NllKernel *k);

// Number of weights and the cell offset of the first one.
//
// # Safety
// `k` must be a live kernel handle; outputs must be writable.
enum NllStatus nll_kernel_shape(const struct NllKernel *k, size_t *len, ptrdiff_t *offset);

// Copies the weights into `out`.
//
// # Safety
// `k` must be a live kernel handle; `out` must hold `cap` doubles.
enum NllStatus nll_kernel_weights(const struct NllKernel *k,
                                  double *out,
                                  size_t cap,
                                  size_t *written);

// `w = u * eta_eps` at the left face of each of the `n` cells.
//
// # Safety
// `u` and `w_out` must hold `n` doubles; `k` must be a live handle.
enum NllStatus nll_convolve(const struct NllKernel *k,
                            const double *u,
                            size_t n,
                            uint32_t boundary_kind,
                            double u_minus,
                            double u_plus,
                            uint32_t engine_kind,
                            double *w_out);

// Total variation of `u`, including the jumps to the far-field states.
//
// # Safety
// `u` must hold `n` doubles; `out` must be writable.
enum NllStatus nll_total_variation(const double *u,
                                   size_t n,
                                   uint32_t boundary_kind,
                                   double u_minus,
                                   double u_plus,
                                   double *out);

// Godunov flux of `f(u) = u V(u)` for velocity `linear` or `quadratic`.
//
// # Safety
// `velocity_id` must be a NUL-terminated string; `out` must be writable.
enum NllStatus nll_godunov_flux(const char *velocity_id, double u_l, double u_r, double *out);

// Parses a `single_run` configuration from TOML text and runs it in
// memory. Relative file names resolve against the working directory.
//
// # Safety
// `config_toml` must be a NUL-terminated string; `out` must be writable.
enum NllStatus nll_run_config(const char *config_toml, struct NllTrace **out);

// Runs any experiment from a config file, writing artifacts into
// `out_dir`. `exit_code` receives the command-line exit status.
//
// # Safety
// Paths must be NUL-terminated strings; `exit_code` must be writable.
enum NllStatus nll_run_experiment(const char *config_path,
                                  const char *out_dir,
                                  bool create,
                                  int32_t *exit_code);

// # Safety
// `t` must come from [`nll_run_config`] and not be used afterwards. Null is ignored.
void nll_trace_free(struct NllTrace *t);

// Cell count, stored snapshot count and number of time steps.
//
// # Safety
// `t` must be a live trace handle; outputs may be null to skip them.
enum NllStatus nll_trace_info(const struct NllTrace *t,
                              size_t *n_cells,
                              size_t *n_snapshots,
                              size_t *n_steps);

// Cell centres.
//
// # Safety
// `t` must be a live trace handle; `out` must hold `cap` doubles.
enum NllStatus nll_trace_centers(const struct NllTrace *t,
                                 double *out,
                                 size_t cap,
                                 size_t *written);

// Time of snapshot `i`.
//
// # Safety
// `t` must be a live trace handle; `out` must be writable.
enum NllStatus nll_trace_time(const struct NllTrace *t, size_t i, double *out);

// Density `u` of snapshot `i`.
//
// # Safety
// `t` must be a live trace handle; `out` must hold `cap` doubles.
enum NllStatus nll_trace_u(const struct NllTrace *t,
                           size_t i,
                           double *out,
                           size_t cap,
                           size_t *written);

// Convolution `w` of snapshot `i`; `NLL_STATUS_UNSUPPORTED` for local runs.
//
// # Safety
// `t` must be a live trace handle; `out` must hold `cap` doubles.
enum NllStatus nll_trace_w(const struct NllTrace *t,
                           size_t i,
                           double *out,
                           size_t cap,
                           size_t *written);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NLL_H */
