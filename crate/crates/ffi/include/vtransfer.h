#ifndef VTRANSFER_H
#define VTRANSFER_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VtStatus {
  VT_STATUS_OK = 0,
  VT_STATUS_NULL_POINTER = 1,
  VT_STATUS_DOMAIN = 2,
  VT_STATUS_SHAPE_MISMATCH = 3,
  VT_STATUS_CONSTRAINT_VIOLATION = 4,
  VT_STATUS_NUMERICAL = 5,
  VT_STATUS_MISSING_INPUT = 6,
  VT_STATUS_CONFIG = 7,
  VT_STATUS_PARSE = 8,
  VT_STATUS_IO = 9,
  // A Rust panic was caught at the boundary.
  VT_STATUS_INTERNAL = 10,
} VtStatus;

typedef enum VtPolicy {
  VT_POLICY_GREEDY = 0,
  VT_POLICY_SOURCE_ONLY = 1,
  VT_POLICY_TARGET_ONLY = 2,
  VT_POLICY_NAIVELY_COMBINE = 3,
  VT_POLICY_PATTERN_TRANSFER = 4,
} VtPolicy;

// A validated scenario.
typedef struct VtScenario VtScenario;

// A `(horizon + 1) x n_cells` value table.
typedef struct VtValueTable VtValueTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *vt_last_error(void);

// Discounted value of `revenue` paid in `duration` equal per-step installments.
enum VtStatus vt_discounted_reward(double revenue, uint32_t duration, double gamma, double *result);

// All-zero table with `horizon + 1` rows.
enum VtStatus vt_table_new(size_t horizon,
                           size_t n_cells,
                           double gamma,
                           struct VtValueTable **table);

// Frees a table. Null is ignored.
//
// # Safety
// `table` must come from this library and not be used afterwards.
void vt_table_free(struct VtValueTable *table);

enum VtStatus vt_table_shape(const struct VtValueTable *table, size_t *horizon, size_t *n_cells);

enum VtStatus vt_table_get(const struct VtValueTable *table, size_t t, size_t cell, double *value);

// Sets one entry. The terminal row `t == horizon` stays zero.
enum VtStatus vt_table_set(struct VtValueTable *table, size_t t, size_t cell, double value);

// Reads a table: CSV when the path ends in `.csv`, binary otherwise.
// `gamma` is recorded with CSV tables; binary files carry their own.
enum VtStatus vt_table_read(const char *file, double gamma, struct VtValueTable **table);

enum VtStatus vt_table_write(const struct VtValueTable *table, const char *file);

// Share of `(t, pair)` combinations, `t < horizon`, that the two tables
// order the same way. `pairs` holds `n_pairs` cell index pairs, flattened.
enum VtStatus vt_concordance_rate(const struct VtValueTable *source,
                                  const struct VtValueTable *target,
                                  const size_t *pairs,
                                  size_t n_pairs,
                                  double *rate);

// Maximum-score matching. `scores` is `n_drivers x (n_orders + 1)` row
// major with column 0 the unmatched option; `feasible` has the same layout
// (non-zero means allowed) or is null. `assignment[l]` receives the order
// index of driver `l`, or -1.
enum VtStatus vt_km_match(size_t n_drivers,
                          size_t n_orders,
                          const double *scores,
                          const uint8_t *feasible,
                          int64_t *assignment,
                          double *objective);

// Loads and validates a scenario file.
enum VtStatus vt_scenario_load(const char *file, struct VtScenario **scenario);

// Frees a scenario. Null is ignored.
//
// # Safety
// `scenario` must come from this library and not be used afterwards.
void vt_scenario_free(struct VtScenario *scenario);

// Runs `policy` for `days` target days on each seed. `rewards` receives
// `n_seeds x days` values, seed-major.
enum VtStatus vt_run_experiment(const struct VtScenario *scenario,
                                enum VtPolicy policy,
                                double gamma,
                                double lambda,
                                size_t days,
                                const uint64_t *seeds,
                                size_t n_seeds,
                                double *rewards);

// Reference value tables of the scenario's source and target environments
// under myopic dispatch, each estimated from `days` logged days.
enum VtStatus vt_oracle_tables(const struct VtScenario *scenario,
                               double gamma,
                               size_t days,
                               uint64_t seed,
                               struct VtValueTable **source,
                               struct VtValueTable **target);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VTRANSFER_H */
