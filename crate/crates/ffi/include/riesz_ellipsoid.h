#ifndef RIESZ_ELLIPSOID_H
#define RIESZ_ELLIPSOID_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RzStatus {
  RZ_STATUS_OK = 0,
  RZ_STATUS_NULL_POINTER = 1,
  RZ_STATUS_INVALID_INPUT = 2,
  RZ_STATUS_POSITIVITY_AUDIT_FAILED = 3,
  RZ_STATUS_CONTINUATION_FAILED = 4,
  RZ_STATUS_DOMAIN = 5,
  RZ_STATUS_NUMERICAL = 6,
  RZ_STATUS_BUFFER_TOO_SMALL = 7,
  RZ_STATUS_PANIC = 8,
} RzStatus;

/**
 * Potential of the Barenblatt measure on a solved ellipsoid.
 */
typedef struct RzPotential RzPotential;

/**
 * Anisotropy profile together with `(d, s)`.
 */
typedef struct RzProfile RzProfile;

/**
 * Solved support ellipsoid.
 */
typedef struct RzSolution RzSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *rz_version(void);

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated, truncated
 * to `len - 1` bytes). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t rz_last_error(char *buf, size_t len);

/**
 * `Psi-hat = 1`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum RzStatus rz_profile_isotropic(size_t d, double s, struct RzProfile **out);

/**
 * Profile given by real spherical-harmonic coefficients of `Psi-hat` (`fourier != 0`)
 * or of `Psi` (`fourier == 0`). Arrays `n`, `m`, `coeff` have `len` entries.
 *
 * # Safety
 * The arrays must hold `len` values; `out` must be a valid pointer.
 */
enum RzStatus rz_profile_harmonics(size_t d,
                                   double s,
                                   const uint32_t *n,
                                   const int32_t *m,
                                   const double *coeff,
                                   size_t len,
                                   int fourier,
                                   struct RzProfile **out);

/**
 * `Psi-hat` at the unit vector `w` (length `d`).
 *
 * # Safety
 * `p` must be a live profile, `w` must hold `len` values and `out` be valid.
 */
enum RzStatus rz_profile_eval_hat(const struct RzProfile *p,
                                  const double *w,
                                  size_t len,
                                  double *out);

/**
 * # Safety
 * `p` must be null or a handle from `rz_profile_*` not yet freed.
 */
void rz_profile_free(struct RzProfile *p);

/**
 * Solves for the support ellipsoid with default solver settings.
 *
 * # Safety
 * `p` must be a live profile and `out` a valid pointer.
 */
enum RzStatus rz_solve(const struct RzProfile *p, struct RzSolution **out);

/**
 * # Safety
 * `sol` must be a live solution.
 */
size_t rz_solution_dim(const struct RzSolution *sol);

/**
 * Final residual `|L(1, M)|_inf`, NaN for a null handle.
 *
 * # Safety
 * `sol` must be a live solution.
 */
double rz_solution_residual(const struct RzSolution *sol);

/**
 * Semi-axes, descending, into `out[0..d]`.
 *
 * # Safety
 * `sol` must be a live solution; `out` must hold `len` values.
 */
enum RzStatus rz_solution_semi_axes(const struct RzSolution *sol, double *out, size_t len);

/**
 * Rotation `R` (columns are the principal axes), row-major into `out[0..d*d]`.
 *
 * # Safety
 * `sol` must be a live solution; `out` must hold `len` values.
 */
enum RzStatus rz_solution_rotation(const struct RzSolution *sol, double *out, size_t len);

/**
 * # Safety
 * `sol` must be null or a handle from `rz_solve` not yet freed.
 */
void rz_solution_free(struct RzSolution *sol);

/**
 * Potential field of the Barenblatt measure on `sol` for the kernel of `p`.
 *
 * # Safety
 * `sol` and `p` must be live handles; `out` a valid pointer.
 */
enum RzStatus rz_potential_new(const struct RzSolution *sol,
                               const struct RzProfile *p,
                               struct RzPotential **out);

/**
 * `(W * mu)(x)`.
 *
 * # Safety
 * `pot` must be live; `x` must hold `len` values; `out` must be valid.
 */
enum RzStatus rz_potential_convolve(const struct RzPotential *pot,
                                    const double *x,
                                    size_t len,
                                    double *out);

/**
 * `P_E(x) = (W * mu)(x) + |x|^2 / 2`.
 *
 * # Safety
 * As for [`rz_potential_convolve`].
 */
enum RzStatus rz_potential_eval(const struct RzPotential *pot,
                                const double *x,
                                size_t len,
                                double *out);

/**
 * Total energy of the measure.
 *
 * # Safety
 * `pot` must be a live handle.
 */
double rz_potential_energy(const struct RzPotential *pot);

/**
 * # Safety
 * `pot` must be null or a handle from `rz_potential_new` not yet freed.
 */
void rz_potential_free(struct RzPotential *pot);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RIESZ_ELLIPSOID_H */
