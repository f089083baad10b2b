#ifndef CROSSDIFF_H
#define CROSSDIFF_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CdStatus {
  CD_STATUS_OK = 0,
  CD_STATUS_NULL_POINTER = 1,
  CD_STATUS_INVALID_ARGUMENT = 2,
  CD_STATUS_DOMAIN = 3,
  CD_STATUS_ORDER = 4,
  CD_STATUS_SINGULAR_STENCIL = 5,
  CD_STATUS_DIMENSION_MISMATCH = 6,
  CD_STATUS_DEGENERATE_METRIC = 7,
  CD_STATUS_ZERO_VECTOR = 8,
  CD_STATUS_DOMAIN_EXIT = 9,
  CD_STATUS_INDEX = 10,
  CD_STATUS_INFEASIBLE_MASS = 11,
  CD_STATUS_INVALID_MEASURE = 12,
  CD_STATUS_NOT_OPTIMAL = 13,
  CD_STATUS_COMPLEXITY_GUARD = 14,
  CD_STATUS_CONFIG = 15,
  CD_STATUS_IO = 16,
  CD_STATUS_BUFFER_TOO_SMALL = 17,
  CD_STATUS_PANIC = 18,
} CdStatus;

// Cost function handle.
typedef struct CdCost CdCost;

// Discrete measure handle.
typedef struct CdMeasure CdMeasure;

// Solved plan with its dual potentials and support points.
typedef struct CdPlan CdPlan;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *cd_version(void);

// Copy the calling thread's last error message into `buf` (truncated,
// always NUL-terminated when `len > 0`). Returns the length needed
// including the terminator.
//
// # Safety
// `buf` must be valid for `len` bytes or null.
size_t cd_last_error_message(char *buf, size_t len);

// Catalogue cost by name with default domains.
//
// # Safety
// `name` must be a NUL-terminated string; `out` must be writable.
enum CdStatus cd_cost_new(const char *name, size_t dim, struct CdCost **out);

// Cost from its JSON description (`{"name": "power", "dim": 1, "p": 1.5, ...}`).
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum CdStatus cd_cost_from_json(const char *json, struct CdCost **out);

// # Safety
// `cost` must come from `cd_cost_new`/`cd_cost_from_json` (or be null) and not be used afterwards.
void cd_cost_free(struct CdCost *cost);

// # Safety
// `cost` must be a live handle; outputs must be writable.
enum CdStatus cd_cost_dims(const struct CdCost *cost, size_t *dim_x, size_t *dim_y);

// `c(x, y)`.
//
// # Safety
// `x` and `y` must hold `dim_x` and `dim_y` doubles.
enum CdStatus cd_cost_value(const struct CdCost *cost,
                            const double *x,
                            const double *y,
                            double *out);

// Signature `(k_plus, k_zero, k_minus, rank)` of the pseudo-metric at
// `(x, y)`; `tol <= 0` selects the default rank tolerance.
//
// # Safety
// `x`, `y` sized as for `cd_cost_value`; `out` must hold 4 values.
enum CdStatus cd_signature(const struct CdCost *cost,
                           const double *x,
                           const double *y,
                           double tol,
                           size_t *out);

// Sectional MTW value at `(x, y)` for `p` (length `dim_x`) and `q` (length `dim_y`).
//
// # Safety
// All arrays sized as described.
enum CdStatus cd_mtw_sectional(const struct CdCost *cost,
                               const double *x,
                               const double *y,
                               const double *p,
                               const double *q,
                               double *out);

// Measure on `count` atoms of dimension `dim` (row-major `atoms`), weights
// normalised; duplicate atoms are merged.
//
// # Safety
// `atoms` must hold `count * dim` doubles and `weights` `count` doubles.
enum CdStatus cd_measure_new(const double *atoms,
                             size_t count,
                             size_t dim,
                             const double *weights,
                             struct CdMeasure **out);

// # Safety
// `m` must come from `cd_measure_new` (or be null) and not be used afterwards.
void cd_measure_free(struct CdMeasure *m);

// Number of atoms after merging duplicates.
//
// # Safety
// `m` must be a live handle; `out` writable.
enum CdStatus cd_measure_len(const struct CdMeasure *m, size_t *out);

// Optimal plan and dual potentials.
//
// # Safety
// Handles must be live; `out` writable.
enum CdStatus cd_solve(const struct CdCost *cost,
                       const struct CdMeasure *mu_plus,
                       const struct CdMeasure *mu_minus,
                       struct CdPlan **out);

// # Safety
// `plan` must come from `cd_solve` (or be null) and not be used afterwards.
void cd_plan_free(struct CdPlan *plan);

// Number of plan entries.
//
// # Safety
// `plan` must be live; `out` writable.
enum CdStatus cd_plan_len(const struct CdPlan *plan, size_t *out);

// Total transport cost of the plan.
//
// # Safety
// `plan` must be live; `out` writable.
enum CdStatus cd_plan_cost(const struct CdPlan *plan, double *out);

// Copy the entries into `i`, `j`, `mass` (each of capacity `cap`).
// Fails with `BUFFER_TOO_SMALL` if `cap` is below `cd_plan_len`.
//
// # Safety
// Output arrays must hold `cap` elements.
enum CdStatus cd_plan_entries(const struct CdPlan *plan,
                              size_t *i,
                              size_t *j,
                              double *mass,
                              size_t cap);

// Copy the dual potentials; `n_plus`/`n_minus` must equal the atom counts.
//
// # Safety
// Output arrays must hold `n_plus` and `n_minus` doubles.
enum CdStatus cd_plan_dual(const struct CdPlan *plan,
                           double *u_plus,
                           size_t n_plus,
                           double *u_minus,
                           size_t n_minus);

// Cyclical monotonicity of the plan's support up to cycle length `k`
// (`exact != 0` forces enumeration). `certified` is 1 or 0; on a violation
// `gap` receives the (negative) cycle gap, otherwise 0.
//
// # Safety
// Handles must be live; outputs writable.
enum CdStatus cd_plan_certify(const struct CdCost *cost,
                              const struct CdPlan *plan,
                              size_t k,
                              int32_t exact,
                              int32_t *certified,
                              double *gap);

// Run a scenario given as JSON text; relative paths resolve against
// `base_dir` (may be null for the working directory). `report` receives a
// JSON string to release with `cd_string_free`; `all_met` is 1 when every
// declared expectation was met.
//
// # Safety
// Strings NUL-terminated; outputs writable.
enum CdStatus cd_run_scenario_json(const char *json,
                                   const char *base_dir,
                                   size_t jobs,
                                   char **report,
                                   int32_t *all_met);

// # Safety
// `s` must come from this library (or be null) and not be used afterwards.
void cd_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CROSSDIFF_H */
