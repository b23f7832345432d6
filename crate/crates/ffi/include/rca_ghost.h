#ifndef RCA_GHOST_H
#define RCA_GHOST_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RgStatus {
  RG_STATUS_OK = 0,
  RG_STATUS_NULL_POINTER = 1,
  RG_STATUS_INVALID_ARGUMENT = 2,
  RG_STATUS_INVALID_CONFIG = 3,
  RG_STATUS_MISSING_ARTIFACT = 4,
  RG_STATUS_MALFORMED_ARTIFACT = 5,
  RG_STATUS_IO = 6,
  RG_STATUS_NUMERIC = 7,
  RG_STATUS_BUFFER_TOO_SMALL = 8,
  RG_STATUS_PANIC = 9,
} RgStatus;

// Pipeline configuration handle.
typedef struct RgConfig RgConfig;

// Complex volume handle, `[x][y][z]`.
typedef struct RgVolume RgVolume;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer is
// valid until the next failing call on the same thread.
const char *rg_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *rg_version(void);

// Creates a config from a built-in profile (`"desk"` or `"full"`; NULL
// means desk), optionally merged with the TOML file at `path` (may be NULL).
//
// # Safety
// `profile` and `path` must be NULL or valid C strings; `out` must be a
// valid pointer.
enum RgStatus rg_config_load(const char *profile, const char *path, struct RgConfig **out);

// # Safety
// `cfg` must be NULL or a handle from [`rg_config_load`] not yet freed.
void rg_config_free(struct RgConfig *cfg);

// # Safety
// `cfg` must be a live handle and `dir` a valid C string.
enum RgStatus rg_config_set_output_dir(struct RgConfig *cfg, const char *dir);

// # Safety
// `cfg` must be a live handle.
enum RgStatus rg_config_set_seed(struct RgConfig *cfg, uint64_t seed);

// Runs `"simulate"`, `"beamform"`, `"filter"`, `"metrics"` or `"all"`.
// `threads == 0` uses the default pool.
//
// # Safety
// `cfg` must be a live handle and `stage` a valid C string.
enum RgStatus rg_run_stage(const struct RgConfig *cfg, const char *stage, uint32_t threads);

// Time of flight in seconds from transmit element `tx` through point `p`
// (meters, `[x, y, z]`) to receive element `rx` along path `(n, i)`, using
// the config's array and sound speed.
//
// # Safety
// `cfg` must be a live handle, `p` must point to 3 doubles and `out` to one.
enum RgStatus rg_tof(const struct RgConfig *cfg,
                     size_t tx,
                     size_t rx,
                     uint8_t n,
                     uint8_t i,
                     const double *p,
                     double *out);

// Normalized complex correlation of two interleaved `(re, im)` vectors of
// `len` complex values each. Writes `(re, im)` to `out`.
//
// # Safety
// `x` and `y` must point to `2 * len` doubles, `out` to 2.
enum RgStatus rg_complex_correlation(const double *x, const double *y, size_t len, double *out);

// Loads the beamformed frame for path `(n, i)` from the config's output
// directory.
//
// # Safety
// `cfg` must be a live handle and `out` a valid pointer.
enum RgStatus rg_volume_load_frame(const struct RgConfig *cfg,
                                   uint8_t n,
                                   uint8_t i,
                                   struct RgVolume **out);

// Loads the filtered volume from the config's output directory.
//
// # Safety
// `cfg` must be a live handle and `out` a valid pointer.
enum RgStatus rg_volume_load_filtered(const struct RgConfig *cfg, struct RgVolume **out);

// # Safety
// `v` must be NULL or a live volume handle.
void rg_volume_free(struct RgVolume *v);

// Writes the voxel counts `[nx, ny, nz]`.
//
// # Safety
// `v` must be a live handle and `dims` must point to 3 `size_t`.
enum RgStatus rg_volume_dims(const struct RgVolume *v, size_t *dims);

// Copies the voxel magnitudes in `[x][y][z]` order into `buf`, which must
// hold at least `nx * ny * nz` doubles.
//
// # Safety
// `v` must be a live handle and `buf` must point to `len` doubles.
enum RgStatus rg_volume_magnitude(const struct RgVolume *v, double *buf, size_t len);

// Writes the index of the largest-magnitude voxel.
//
// # Safety
// `v` must be a live handle and `idx` must point to 3 `size_t`.
enum RgStatus rg_volume_argmax(const struct RgVolume *v, size_t *idx);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RCA_GHOST_H */
