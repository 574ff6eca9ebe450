/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef MQED_H
#define MQED_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible entry point.
typedef enum MqedStatus {
  MQED_STATUS_OK = 0,
  MQED_STATUS_NULL_POINTER = 1,
  MQED_STATUS_INVALID_PARAMETER = 2,
  MQED_STATUS_INVALID_SCENE = 3,
  MQED_STATUS_CONFIG = 4,
  MQED_STATUS_COINCIDENT_POINTS = 5,
  MQED_STATUS_SOLVE = 6,
  MQED_STATUS_NO_CONVERGENCE = 7,
  MQED_STATUS_QUADRATURE = 8,
  MQED_STATUS_RESOURCE = 9,
  MQED_STATUS_IO = 10,
  MQED_STATUS_PANIC = 11,
} MqedStatus;

// Operator ordering selector for [`mqed_planck_weight`].
typedef enum MqedOrdering {
  MQED_ORDERING_MINUS_PLUS = 0,
  MQED_ORDERING_PLUS_MINUS = 1,
  MQED_ORDERING_SYMMETRIZED = 2,
} MqedOrdering;

// Opaque scene handle.
typedef struct MqedScene MqedScene;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *mqed_last_error(void);

// Builds a scene from TOML text. `base_dir` (nullable) resolves relative
// table paths.
//
// # Safety
// `toml` must be a NUL-terminated string, `base_dir` null or one, and
// `out` a valid pointer.
enum MqedStatus mqed_scene_from_toml(const char *toml,
                                     const char *base_dir,
                                     struct MqedScene **out);

// Builds a scene from a TOML file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum MqedStatus mqed_scene_from_file(const char *path, struct MqedScene **out);

// Releases a scene; null is ignored.
//
// # Safety
// `scene` must come from a constructor above and not be used afterwards.
void mqed_scene_free(struct MqedScene *scene);

// Number of scatterer voxels; 0 for null.
//
// # Safety
// `scene` must be null or a live handle.
size_t mqed_scene_voxel_count(const struct MqedScene *scene);

// Writes the 64-character hex scene hash plus NUL into `buf` (`len >= 65`).
//
// # Safety
// `scene` must be a live handle and `buf` hold `len` bytes.
enum MqedStatus mqed_scene_hash(const struct MqedScene *scene, char *buf, size_t len);

// `G_eff(a, b)` at `omega` into `out[18]`.
//
// # Safety
// `a`, `b` point to 3 doubles, `out` to 18.
enum MqedStatus mqed_green(const struct MqedScene *scene,
                           double omega,
                           const double *a,
                           const double *b,
                           double *out);

// Commutator density `(hbar/pi) k^2 Im G_eff(a, b)` into `out[18]`.
//
// # Safety
// As [`mqed_green`].
enum MqedStatus mqed_commutator_density(const struct MqedScene *scene,
                                        double omega,
                                        const double *a,
                                        const double *b,
                                        double *out);

// Projected LDOS at `x` along the unit vector `n`.
//
// # Safety
// `x` and `n` point to 3 doubles, `out` to one.
enum MqedStatus mqed_ldos(const struct MqedScene *scene,
                          double omega,
                          const double *x,
                          const double *n,
                          double *out);

// Spontaneous emission rate and Purcell factor of a dipole `|mu| = dipole`
// at `position` along `orientation`.
//
// # Safety
// Vector arguments point to 3 doubles; `rate` and `purcell` to one each.
enum MqedStatus mqed_spontaneous_rate(const struct MqedScene *scene,
                                      double omega,
                                      const double *position,
                                      const double *orientation,
                                      double dipole,
                                      double *rate,
                                      double *purcell);

// Relative residual of Im G(a, b) = surface + volume on a sphere of
// `radius` with a rule of degree `order`.
//
// # Safety
// `a`, `b` point to 3 doubles, `out` to one.
enum MqedStatus mqed_identity_residual(const struct MqedScene *scene,
                                       double omega,
                                       const double *a,
                                       const double *b,
                                       double radius,
                                       size_t order,
                                       double *out);

// Thermal Casimir force on the body formed by `voxels[0..count]` at
// temperature `t`, with the default frequency grid, into `out[3]`.
//
// # Safety
// `voxels` points to `count` indices, `out` to 3 doubles.
enum MqedStatus mqed_casimir_force(const struct MqedScene *scene,
                                   const size_t *voxels,
                                   size_t count,
                                   double t,
                                   double *out);

// Planck weight of `ordering` at `x = hbar omega / k_B T`.
//
// # Safety
// `out` must point to one double.
enum MqedStatus mqed_planck_weight(double x, enum MqedOrdering ordering, double *out);

// Polariton frequencies at bare photon frequency `omega_alpha` into
// `out[6]`: upper, lower and longitudinal roots as `(re, im)` pairs.
//
// # Safety
// `out` must point to 6 doubles.
enum MqedStatus mqed_polariton_branches(double omega_p,
                                        double omega_0,
                                        double gamma,
                                        double omega_alpha,
                                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MQED_H */
