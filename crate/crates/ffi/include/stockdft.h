#ifndef STOCKDFT_H
#define STOCKDFT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call. In C the variants are named
 * `SD_STATUS_OK`, `SD_STATUS_NULL_POINTER`, and so on.
 */
typedef enum SdStatus {
  SD_STATUS_OK = 0,
  SD_STATUS_NULL_POINTER = 1,
  SD_STATUS_INVALID_UTF8 = 2,
  SD_STATUS_IO_ERROR = 3,
  SD_STATUS_DATA_ERROR = 4,
  SD_STATUS_CONFIG_ERROR = 5,
  /**
   * The solve finished without converging; the solution is still returned.
   */
  SD_STATUS_NOT_CONVERGED = 6,
  SD_STATUS_OUT_OF_RANGE = 7,
  SD_STATUS_BUFFER_TOO_SMALL = 8,
  SD_STATUS_PANIC = 9,
} SdStatus;

/**
 * Solver configuration.
 */
typedef struct SdConfig SdConfig;

/**
 * Result of a solve.
 */
typedef struct SdSolution SdSolution;

/**
 * Aligned market data.
 */
typedef struct SdUniverse SdUniverse;

/**
 * Energy totals of a solution.
 */
typedef struct SdTotals {
  double kinetic;
  double external;
  double hartree;
  double e_dft;
  double sum_epsilon;
  double nuclear_repulsion;
} SdTotals;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *sd_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sd_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void sd_string_free(char *s);

/**
 * Parses `prices.csv` / `caps.csv` contents and aligns them.
 *
 * # Safety
 * Buffers must be readable for the given lengths; `out` must be writable.
 */
enum SdStatus sd_universe_from_csv(const uint8_t *prices,
                                   size_t prices_len,
                                   const uint8_t *caps,
                                   size_t caps_len,
                                   bool reject_out_of_band,
                                   struct SdUniverse **out);

/**
 * Loads a universe JSON file written by `stockdft ingest`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SdStatus sd_universe_from_json_file(const char *path, struct SdUniverse **out);

/**
 * Number of instruments in the universe, 0 for null.
 *
 * # Safety
 * `u` must be null or a live handle.
 */
size_t sd_universe_len(const struct SdUniverse *u);

/**
 * Number of common dates in the universe, 0 for null.
 *
 * # Safety
 * `u` must be null or a live handle.
 */
size_t sd_universe_date_count(const struct SdUniverse *u);

/**
 * # Safety
 * `u` must be null or a handle not yet freed.
 */
void sd_universe_free(struct SdUniverse *u);

/**
 * A configuration holding the defaults.
 */
struct SdConfig *sd_config_new(void);

/**
 * Parses a `key = value` configuration text.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum SdStatus sd_config_from_str(const char *text, struct SdConfig **out);

/**
 * Sets one configuration key, e.g. `("hbar", "0.003")` or
 * `("link_policy", "mass_ordered")`. The configuration is unchanged on
 * failure.
 *
 * # Safety
 * `config` must be a live handle; `key` and `value` NUL-terminated strings.
 */
enum SdStatus sd_config_set(struct SdConfig *config, const char *key, const char *value);

/**
 * The configuration as `key = value` text.
 *
 * # Safety
 * `config` must be null or a live handle.
 */
char *sd_config_to_string(const struct SdConfig *config);

/**
 * # Safety
 * `config` must be null or a handle not yet freed.
 */
void sd_config_free(struct SdConfig *config);

/**
 * Runs the SCF loop. On `SD_STATUS_OK` or `SD_STATUS_NOT_CONVERGED` a solution is written
 * to `out`; on any other status `out` is left untouched.
 *
 * # Safety
 * `universe` and `config` must be live handles; `out` must be writable.
 */
enum SdStatus sd_solve(const struct SdUniverse *universe,
                       const struct SdConfig *config,
                       struct SdSolution **out);

/**
 * Whether the solve converged; false for null.
 *
 * # Safety
 * `s` must be null or a live handle.
 */
bool sd_solution_converged(const struct SdSolution *s);

/**
 * Iterations performed; 0 for null.
 *
 * # Safety
 * `s` must be null or a live handle.
 */
size_t sd_solution_iterations(const struct SdSolution *s);

/**
 * Number of density-carrying instruments; 0 for null.
 *
 * # Safety
 * `s` must be null or a live handle.
 */
size_t sd_solution_count(const struct SdSolution *s);

/**
 * Number of grid nodes of every density; 0 for null.
 *
 * # Safety
 * `s` must be null or a live handle.
 */
size_t sd_solution_grid_points(const struct SdSolution *s);

/**
 * Ticker of instrument `index`, or null when out of range.
 *
 * # Safety
 * `s` must be null or a live handle.
 */
char *sd_solution_ticker(const struct SdSolution *s, size_t index);

/**
 * Ground energy `ε` of instrument `index` (without the index-index
 * constant) and the same energy with it.
 *
 * # Safety
 * `s` must be a live handle; the outputs must be writable or null.
 */
enum SdStatus sd_solution_epsilon(const struct SdSolution *s,
                                  size_t index,
                                  double *epsilon,
                                  double *epsilon_with_nuclear_shift);

/**
 * Copies the grid nodes into `buf` (at least `sd_solution_grid_points`).
 *
 * # Safety
 * `buf` must be writable for `len` values.
 */
enum SdStatus sd_solution_nodes(const struct SdSolution *s, double *buf, size_t len);

/**
 * Copies the density of instrument `index` into `buf`.
 *
 * # Safety
 * `buf` must be writable for `len` values.
 */
enum SdStatus sd_solution_density(const struct SdSolution *s,
                                  size_t index,
                                  double *buf,
                                  size_t len);

/**
 * Copies the summed density of all instruments into `buf`.
 *
 * # Safety
 * `buf` must be writable for `len` values.
 */
enum SdStatus sd_solution_total_density(const struct SdSolution *s, double *buf, size_t len);

/**
 * # Safety
 * `s` must be a live handle and `out` writable.
 */
enum SdStatus sd_solution_totals(const struct SdSolution *s, struct SdTotals *out);

/**
 * The report in the `report.json` layout, without input digests.
 *
 * # Safety
 * `s` must be null or a live handle.
 */
char *sd_solution_report_json(const struct SdSolution *s);

/**
 * # Safety
 * `s` must be null or a handle not yet freed.
 */
void sd_solution_free(struct SdSolution *s);

/**
 * Sigmoid mass of a market cap.
 *
 * # Safety
 * `out` must be writable.
 */
enum SdStatus sd_mass_from_cap(double cap, double cap_scale, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STOCKDFT_H */
