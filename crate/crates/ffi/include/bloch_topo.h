#ifndef BLOCH_TOPO_H
#define BLOCH_TOPO_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BtPart {
  BT_PART_RE = 0,
  BT_PART_IM = 1,
} BtPart;

typedef enum BtStatus {
  BT_STATUS_OK = 0,
  BT_STATUS_NULL_POINTER = 1,
  BT_STATUS_INVALID_PARAMETER = 2,
  BT_STATUS_UNKNOWN_MODEL = 3,
  BT_STATUS_CONFIG = 4,
  BT_STATUS_SINGULAR = 5,
  BT_STATUS_NON_CONVERGENCE = 6,
  BT_STATUS_NON_ISOLATED = 7,
  BT_STATUS_ILL_CONDITIONED_LOOP = 8,
  BT_STATUS_GAPLESS = 9,
  BT_STATUS_NOT_HERMITIAN = 10,
  BT_STATUS_PRECONDITION = 11,
  BT_STATUS_IO = 12,
  BT_STATUS_INVALID_STRING = 13,
  BT_STATUS_PANIC = 14,
} BtStatus;

/**
 * Opaque model handle.
 */
typedef struct BtModel BtModel;

typedef struct BtEulerSummary {
  int32_t chi;
  int32_t index_sum;
  size_t n_source;
  size_t n_sink;
  size_t n_saddle;
  size_t n_degenerate;
  size_t n_singular;
  size_t n_excluded;
  /**
   * 1 or 0 against the model's expected value, -1 when none is known.
   */
  int32_t matches_expected;
} BtEulerSummary;

typedef struct BtChernResult {
  double c_re;
  double c_im;
  /**
   * Valid only when `has_int` is true.
   */
  int32_t c_int;
  bool has_int;
  bool gapless;
  /**
   * False when `sqrt(h·h)` has no branch continuous over the mesh.
   */
  bool branch_consistent;
  double min_gap;
  size_t mesh_n;
} BtChernResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds the sphere model. Requires `r > 0` and `a > 0`.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum BtStatus bt_model_sphere(double r, double a, struct BtModel **out);

/**
 * Builds the Hermitian torus model. Requires `big_r > r > 0`.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum BtStatus bt_model_torus(double big_r, double r, double a, struct BtModel **out);

/**
 * Builds the non-Hermitian torus with the imaginary shift enabled.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum BtStatus bt_model_nh_torus(double big_r,
                                double r,
                                double c,
                                double delta_x,
                                double delta_y,
                                double delta_z,
                                struct BtModel **out);

/**
 * Loads a model from a JSON config file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for a pointer write.
 */
enum BtStatus bt_model_from_config(const char *path, struct BtModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from a `bt_model_*` constructor and not be freed twice.
 */
void bt_model_free(struct BtModel *model);

/**
 * # Safety
 * `model` must be a live handle; `out` must be valid for a write.
 */
enum BtStatus bt_model_is_hermitian(const struct BtModel *model, bool *out);

/**
 * Upper band energy `E+ = sqrt(h·h)` at `(kx, ky)`.
 *
 * # Safety
 * `model` must be a live handle; `re` and `im` must be valid for writes.
 */
enum BtStatus bt_band_energy(const struct BtModel *model,
                             double kx,
                             double ky,
                             double *re,
                             double *im);

/**
 * Upper band velocity as `[vx_re, vx_im, vy_re, vy_im]`.
 *
 * # Safety
 * `model` must be a live handle; `out` must point to four writable doubles.
 */
enum BtStatus bt_velocity(const struct BtModel *model, double kx, double ky, double *out);

/**
 * # Safety
 * `model` must be a live handle; `out` must be valid for a write.
 */
enum BtStatus bt_euler_characteristic(const struct BtModel *model,
                                      enum BtPart part,
                                      size_t grid_n,
                                      struct BtEulerSummary *out);

/**
 * Full Euler report as a JSON string, released with [`bt_string_free`].
 *
 * # Safety
 * `model` must be a live handle; `out` must be valid for a pointer write.
 */
enum BtStatus bt_euler_report_json(const struct BtModel *model,
                                   enum BtPart part,
                                   size_t grid_n,
                                   char **out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void bt_string_free(char *s);

/**
 * Curvature quadrature on an `mesh_n`² midpoint mesh (`mesh_n >= 32`).
 *
 * # Safety
 * `model` must be a live handle; `out` must be valid for a write.
 */
enum BtStatus bt_chern_quadrature(const struct BtModel *model,
                                  size_t mesh_n,
                                  struct BtChernResult *out);

/**
 * Plaquette (lattice) Chern number. Hermitian, gapped models only.
 *
 * # Safety
 * `model` must be a live handle; `out` must be valid for a write.
 */
enum BtStatus bt_chern_lattice(const struct BtModel *model,
                               size_t mesh_n,
                               struct BtChernResult *out);

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *bt_last_error_message(void);

/**
 * Library version, as a static string.
 */
const char *bt_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BLOCH_TOPO_H */
