/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef SILCHECK_H
#define SILCHECK_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SilStatus {
  SIL_STATUS_OK = 0,
  SIL_STATUS_NULL_ARGUMENT = 1,
  SIL_STATUS_INVALID_ARGUMENT = 2,
  SIL_STATUS_PARSE_ERROR = 3,
  SIL_STATUS_EVALUATION_ERROR = 4,
  // Index past the end of a trace.
  SIL_STATUS_OUT_OF_RANGE = 5,
  SIL_STATUS_PANIC = 6,
} SilStatus;

// Scenario handle.
typedef struct SilScenario SilScenario;

// Trace handle.
typedef struct SilTrace SilTrace;

// Ego state at one tick of a trace.
typedef struct SilEgoState {
  uint64_t tick;
  double t;
  double s;
  int32_t lane_id;
  double lat_offset;
  double speed;
} SilEgoState;

// Longitudinal state of a vehicle for TTC queries. `oncoming` vehicles
// move toward decreasing `s`.
typedef struct SilVehicle {
  double s;
  double speed;
  double length;
  bool oncoming;
} SilVehicle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread. Valid until the next
// failing call on the same thread; never null.
const char *sil_last_error(void);

// Library version, static storage.
const char *sil_version(void);

// # Safety
// `s` must come from this library and not have been freed.
void sil_string_free(char *s);

// Builds a catalogued test case (`"TC1"`..`"TC7"`, `"S1"`, `"S2"`). A NaN
// `ego_speed_kph` keeps the catalogue speed.
//
// # Safety
// `tc_id` must be a NUL-terminated string, `out` writable.
enum SilStatus sil_scenario_instantiate(const char *tc_id,
                                        double ego_speed_kph,
                                        struct SilScenario **out);

// Parses scenario file text.
//
// # Safety
// `text` must be a NUL-terminated string, `out` writable.
enum SilStatus sil_scenario_load(const char *text, struct SilScenario **out);

// Scenario file text; free with [`sil_string_free`].
//
// # Safety
// `scenario` must be a live handle, `out` writable.
enum SilStatus sil_scenario_serialize(const struct SilScenario *scenario, char **out);

// # Safety
// `scenario` must come from this library and not have been freed.
void sil_scenario_free(struct SilScenario *scenario);

// Runs the scenario with a controller that never sends anything.
//
// # Safety
// `scenario` must be a live handle, `out` writable.
enum SilStatus sil_run_passive(const struct SilScenario *scenario, struct SilTrace **out);

// Parses a JSONL trace.
//
// # Safety
// `jsonl` must be a NUL-terminated string, `out` writable.
enum SilStatus sil_trace_load(const char *jsonl, struct SilTrace **out);

// # Safety
// `trace` must be a live handle, `out` writable.
enum SilStatus sil_trace_to_jsonl(const struct SilTrace *trace, char **out);

// Number of recorded ticks; 0 for a null handle.
//
// # Safety
// `trace` must be null or a live handle.
size_t sil_trace_tick_count(const struct SilTrace *trace);

// Name of the terminal condition, e.g. `"completed"` or `"collision"`.
//
// # Safety
// `trace` must be a live handle, `out` writable.
enum SilStatus sil_trace_terminal(const struct SilTrace *trace, char **out);

// Hex SHA-256 of the canonical trace encoding.
//
// # Safety
// `trace` must be a live handle, `out` writable.
enum SilStatus sil_trace_hash(const struct SilTrace *trace, char **out);

// # Safety
// `trace` must be a live handle, `out` writable.
enum SilStatus sil_trace_ego_at(const struct SilTrace *trace,
                                size_t index,
                                struct SilEgoState *out);

// # Safety
// `trace` must come from this library and not have been freed.
void sil_trace_free(struct SilTrace *trace);

// Time to collision of `ego` with `lead` along the road. `*has_value` is
// false when the gap is not closing.
//
// # Safety
// `ego` and `lead` must be readable, `out` and `has_value` writable.
enum SilStatus sil_compute_ttc(const struct SilVehicle *ego,
                               const struct SilVehicle *lead,
                               double *out,
                               bool *has_value);

// Unbiased pass@k estimate for `c` passing out of `n` samples.
//
// # Safety
// `out` must be writable.
enum SilStatus sil_pass_at_k(uint64_t n, uint64_t c, uint64_t k, double *out);

// Code extracted from a model response. Fails with `EvaluationError` when
// the response holds no code.
//
// # Safety
// `response` must be a NUL-terminated string, `out` writable.
enum SilStatus sil_extract_code(const char *response, char **out);

// Evaluates candidate source for `function` (`"F1"`..`"F4"`) and returns
// the JSON evaluation record. A null `adapter_toml_path` selects the
// built-in Python adapter. Blocks until every test case has run.
//
// # Safety
// String arguments must be NUL-terminated (or null where allowed), `out`
// writable.
enum SilStatus sil_evaluate_source(const char *source,
                                   const char *function,
                                   const char *adapter_toml_path,
                                   char **out);

// Simulation step in seconds.
double sil_time_step(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SILCHECK_H */
