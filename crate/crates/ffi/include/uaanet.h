#ifndef UAANET_H
#define UAANET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. Zero is success.
typedef enum UaanetStatus {
  UAANET_STATUS_OK = 0,
  UAANET_STATUS_NULL_POINTER = 1,
  UAANET_STATUS_INVALID_UTF8 = 2,
  UAANET_STATUS_INVALID_SCENARIO = 3,
  UAANET_STATUS_INVALID_COMMAND = 4,
  UAANET_STATUS_UNKNOWN_NODE = 5,
  // A contract refused the operation (no route, wrong caller, funds...).
  UAANET_STATUS_REJECTED = 6,
  UAANET_STATUS_DOMAIN_ERROR = 7,
  UAANET_STATUS_PANIC = 8,
} UaanetStatus;

// Opaque simulator instance.
typedef struct UaanetEngine UaanetEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next failing call on the same thread.
const char *uaanet_last_error_message(void);

// Library version, a static string.
const char *uaanet_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void uaanet_string_free(char *s);

// Parses and validates a scenario document without building an engine.
//
// # Safety
// `scenario_toml` must be a NUL-terminated string or null.
enum UaanetStatus uaanet_validate_scenario(const char *scenario_toml);

// Builds an engine from scenario text and stores the handle in `out`.
//
// # Safety
// `scenario_toml` must be a NUL-terminated string; `out` must be writable.
enum UaanetStatus uaanet_engine_new(const char *scenario_toml, struct UaanetEngine **out);

// Destroys an engine. Null is ignored.
//
// # Safety
// `engine` must come from [`uaanet_engine_new`] and not have been freed.
void uaanet_engine_free(struct UaanetEngine *engine);

// Advances `ticks` ticks of 5 ms.
//
// # Safety
// `engine` must be a live handle.
enum UaanetStatus uaanet_engine_step(struct UaanetEngine *engine, uint64_t ticks);

// Advances to `tick`, skipping idle stretches.
//
// # Safety
// `engine` must be a live handle.
enum UaanetStatus uaanet_engine_run_until(struct UaanetEngine *engine, uint64_t tick);

// Advances to the scenario horizon.
//
// # Safety
// `engine` must be a live handle.
enum UaanetStatus uaanet_engine_run_to_horizon(struct UaanetEngine *engine);

// Current tick.
//
// # Safety
// `engine` must be a live handle; `out` must be writable.
enum UaanetStatus uaanet_engine_tick(struct UaanetEngine *engine, uint64_t *out);

// Validates a JSON command and queues it for the next tick boundary.
//
// # Safety
// `engine` must be a live handle; `command_json` a NUL-terminated string.
enum UaanetStatus uaanet_engine_submit_json(struct UaanetEngine *engine, const char *command_json);

// Applies a JSON command immediately, between ticks.
//
// # Safety
// `engine` must be a live handle; `command_json` a NUL-terminated string.
enum UaanetStatus uaanet_engine_apply_json(struct UaanetEngine *engine, const char *command_json);

// Snapshot JSON, consuming the events pending since the previous snapshot.
//
// # Safety
// `engine` must be a live handle; `out` must be writable.
enum UaanetStatus uaanet_engine_snapshot_json(struct UaanetEngine *engine, char **out);

// Node table JSON (address, blacklist count, faulty time, penalty, balance).
//
// # Safety
// `engine` must be a live handle; `out` must be writable.
enum UaanetStatus uaanet_engine_node_table_json(struct UaanetEngine *engine, char **out);

// Whole trace as JSON lines.
//
// # Safety
// `engine` must be a live handle; `out` must be writable.
enum UaanetStatus uaanet_engine_trace_jsonl(struct UaanetEngine *engine, char **out);

// Metrics report JSON.
//
// # Safety
// `engine` must be a live handle; `out` must be writable.
enum UaanetStatus uaanet_engine_metrics_json(struct UaanetEngine *engine, char **out);

// Expected delay between a drop after `x` hops and its detection on an
// `n`-node route: `(n - 1 - x) * per_hop_s`.
//
// # Safety
// `out` must be writable.
enum UaanetStatus uaanet_expected_detection_time(size_t n, size_t x, double per_hop_s, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UAANET_H */
