#ifndef REGEN_LAB_H
#define REGEN_LAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum RlStatus {
  // Success.
  RL_OK = 0,
  // A required pointer argument was null.
  RL_NULL_POINTER = 1,
  // A string argument was not valid UTF-8.
  RL_INVALID_UTF8 = 2,
  // The configuration could not be parsed or failed validation.
  RL_CONFIG_ERROR = 3,
  // The run itself failed.
  RL_RUNTIME_ERROR = 4,
  // The configuration lacks the section the call needs.
  RL_MISSING_SECTION = 5,
  // A panic was caught at the boundary.
  RL_PANIC = 6,
} RlStatus;

// A validated experiment configuration.
typedef struct RlConfig RlConfig;

// The scan of one seed.
typedef struct RlScan RlScan;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// The library version as a static NUL-terminated string.
const char *rl_version(void);

// The message of the last failed call on this thread; empty after success.
const char *rl_last_error(void);

// Parse and validate a TOML configuration.
//
// # Safety
// `toml` is a NUL-terminated string and `out` is a valid pointer.
enum RlStatus rl_config_from_toml(const char *toml, struct RlConfig **out);

// Load a built-in preset by name.
//
// # Safety
// `name` is a NUL-terminated string and `out` is a valid pointer.
enum RlStatus rl_config_from_preset(const char *name, struct RlConfig **out);

// Number of seeds in a configuration.
//
// # Safety
// `config` is a live handle and `out` a valid pointer.
enum RlStatus rl_config_seed_count(const struct RlConfig *config, size_t *out);

// Release a configuration; null is ignored.
//
// # Safety
// `config` is null or a handle from this library not yet freed.
void rl_config_free(struct RlConfig *config);

// Scan the configured process for one seed.
//
// # Safety
// `config` is a live handle and `out` a valid pointer.
enum RlStatus rl_scan_run(const struct RlConfig *config, uint64_t seed, struct RlScan **out);

// Number of break times found.
//
// # Safety
// `scan` is a live handle and `out` a valid pointer.
enum RlStatus rl_scan_break_time_count(const struct RlScan *scan, size_t *out);

// Copy up to `capacity` break times into `buffer`; `written` receives the
// number copied.
//
// # Safety
// `buffer` holds at least `capacity` values; `scan` and `written` are valid.
enum RlStatus rl_scan_break_times(const struct RlScan *scan,
                                  uint64_t *buffer,
                                  size_t capacity,
                                  size_t *written);

// The cycle table as CSV, owned by the scan.
//
// # Safety
// `scan` is a live handle.
const char *rl_scan_cycles_csv(const struct RlScan *scan);

// The per-seed summary as JSON, owned by the scan.
//
// # Safety
// `scan` is a live handle.
const char *rl_scan_summary_json(const struct RlScan *scan);

// Release a scan; null is ignored.
//
// # Safety
// `scan` is null or a handle from this library not yet freed.
void rl_scan_free(struct RlScan *scan);

// Run the whole configuration and write its artifacts to `dir`.
// `passed` receives 0 when an acceptance criterion failed and 1 otherwise.
//
// # Safety
// `config` is a live handle, `dir` a NUL-terminated path and `passed` null
// or valid.
enum RlStatus rl_run_to_dir(const struct RlConfig *config, const char *dir, int32_t *passed);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* REGEN_LAB_H */
