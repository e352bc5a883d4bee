#ifndef OSCILAB_H
#define OSCILAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OscilabStatus {
  OSCILAB_STATUS_OK = 0,
  OSCILAB_STATUS_NULL_POINTER = 1,
  OSCILAB_STATUS_INVALID_UTF8 = 2,
  OSCILAB_STATUS_CONFIG = 3,
  OSCILAB_STATUS_PRECONDITION = 4,
  OSCILAB_STATUS_IO = 5,
  OSCILAB_STATUS_REPLAY_MISMATCH = 6,
  OSCILAB_STATUS_BUFFER_TOO_SMALL = 7,
  OSCILAB_STATUS_PANIC = 8,
} OscilabStatus;

/**
 * Parsed and canonicalized experiment config.
 */
typedef struct OscilabConfig OscilabConfig;

/**
 * Record of a finished run.
 */
typedef struct OscilabResult OscilabResult;

/**
 * Tube family held for repeated raster queries.
 */
typedef struct OscilabTubeFamily OscilabTubeFamily;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread.
 *
 * # Safety
 * `buf` must be writable for `len` bytes; `needed` may be null.
 */
enum OscilabStatus oscilab_last_error(char *buf, size_t len, size_t *needed);

/**
 * Exact threshold exponent for dimension `n` as numerator and denominator.
 *
 * # Safety
 * `num` and `den` must be valid for writes.
 */
enum OscilabStatus oscilab_threshold(uint32_t n, int64_t *num, int64_t *den);

/**
 * Parses a JSON experiment config.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` valid for writes.
 */
enum OscilabStatus oscilab_config_from_json(const char *json, struct OscilabConfig **out);

/**
 * Hex sha256 of the canonical config (64 characters plus NUL).
 *
 * # Safety
 * `cfg` must come from `oscilab_config_from_json`; `buf` must be writable for `len` bytes.
 */
enum OscilabStatus oscilab_config_hash(const struct OscilabConfig *cfg,
                                       char *buf,
                                       size_t len,
                                       size_t *needed);

/**
 * # Safety
 * `cfg` must come from `oscilab_config_from_json` and not be used afterwards; null is ignored.
 */
void oscilab_config_free(struct OscilabConfig *cfg);

/**
 * Runs the experiment into `out_dir`; `threads` = 0 uses the global pool.
 *
 * # Safety
 * `cfg` must be a live config handle, `out_dir` a NUL-terminated path, `out` valid for writes.
 */
enum OscilabStatus oscilab_run(const struct OscilabConfig *cfg,
                               const char *out_dir,
                               size_t threads,
                               struct OscilabResult **out);

/**
 * 1 when every gate passed, 0 otherwise, −1 for a null handle.
 *
 * # Safety
 * `res` must be a live result handle or null.
 */
int32_t oscilab_result_passed(const struct OscilabResult *res);

/**
 * Number of CSV data rows, or 0 for a null handle.
 *
 * # Safety
 * `res` must be a live result handle or null.
 */
size_t oscilab_result_rows(const struct OscilabResult *res);

/**
 * The full result record as JSON.
 *
 * # Safety
 * `res` must be a live result handle; `buf` must be writable for `len` bytes.
 */
enum OscilabStatus oscilab_result_json(const struct OscilabResult *res,
                                       char *buf,
                                       size_t len,
                                       size_t *needed);

/**
 * # Safety
 * `res` must come from `oscilab_run` and not be used afterwards; null is ignored.
 */
void oscilab_result_free(struct OscilabResult *res);

/**
 * Re-runs a result record; `identical` receives 1 when the CSV bytes match.
 *
 * # Safety
 * `record_path` must be a NUL-terminated path and `identical` valid for writes.
 */
enum OscilabStatus oscilab_replay(const char *record_path, size_t threads, int32_t *identical);

/**
 * Curved tubes of width `delta` along the cores of the twisted phase; `shifted` selects the
 * family lying in x2 = x1x3.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum OscilabStatus oscilab_tube_family_curved(double delta,
                                              bool shifted,
                                              struct OscilabTubeFamily **out);

/**
 * # Safety
 * `fam` must be a live family handle or null.
 */
size_t oscilab_tube_family_len(const struct OscilabTubeFamily *fam);

/**
 * Volume of the union of the tubes on a lattice of the given spacing.
 *
 * # Safety
 * `fam` must be a live family handle and `volume` valid for writes.
 */
enum OscilabStatus oscilab_tube_family_union_volume(const struct OscilabTubeFamily *fam,
                                                    double spacing,
                                                    double *volume);

/**
 * # Safety
 * `fam` must come from `oscilab_tube_family_curved` and not be used afterwards; null is ignored.
 */
void oscilab_tube_family_free(struct OscilabTubeFamily *fam);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OSCILAB_H */
