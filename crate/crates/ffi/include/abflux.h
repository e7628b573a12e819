#ifndef ABFLUX_H
#define ABFLUX_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum AbfluxStatus {
  ABFLUX_STATUS_OK = 0,
  ABFLUX_STATUS_NULL_POINTER = 1,
  ABFLUX_STATUS_INVALID_ARGUMENT = 2,
  ABFLUX_STATUS_COMPUTATION = 3,
  ABFLUX_STATUS_PANIC = 4,
} AbfluxStatus;

typedef enum AbfluxBoundary {
  ABFLUX_BOUNDARY_DIRICHLET = 0,
  ABFLUX_BOUNDARY_NEUMANN = 1,
} AbfluxBoundary;

/**
 * A sampled or parsed flux configuration.
 */
typedef struct AbfluxConfiguration AbfluxConfiguration;

/**
 * An assembled magnetic lattice operator.
 */
typedef struct AbfluxOperator AbfluxOperator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *abflux_last_error(void);

/**
 * Library version as a static string.
 */
const char *abflux_version(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be null or a string returned by this library and not yet freed.
 */
void abflux_string_free(char *s);

/**
 * Samples a configuration of `model_json` on the box of index `k`.
 *
 * # Safety
 * `model_json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AbfluxStatus abflux_configuration_sample(const char *model_json,
                                              uint32_t k,
                                              uint64_t seed,
                                              struct AbfluxConfiguration **out);

/**
 * Parses a configuration document.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AbfluxStatus abflux_configuration_from_json(const char *json,
                                                 struct AbfluxConfiguration **out);

/**
 * Serializes a configuration; release the result with [`abflux_string_free`].
 *
 * # Safety
 * `config` must be a live handle and `out` a valid pointer.
 */
enum AbfluxStatus abflux_configuration_to_json(const struct AbfluxConfiguration *config,
                                               char **out);

/**
 * Number of flux points.
 *
 * # Safety
 * `config` must be a live handle and `out` a valid pointer.
 */
enum AbfluxStatus abflux_configuration_len(const struct AbfluxConfiguration *config, size_t *out);

/**
 * # Safety
 * `config` must be null or a handle not yet freed.
 */
void abflux_configuration_free(struct AbfluxConfiguration *config);

/**
 * Assembles the operator of `config` with `m` mesh intervals per unit length.
 *
 * # Safety
 * `config` must be a live handle and `out` a valid pointer.
 */
enum AbfluxStatus abflux_operator_assemble(const struct AbfluxConfiguration *config,
                                           uint32_t m,
                                           enum AbfluxBoundary boundary,
                                           struct AbfluxOperator **out);

/**
 * Number of unknowns.
 *
 * # Safety
 * `op` must be a live handle and `out` a valid pointer.
 */
enum AbfluxStatus abflux_operator_dim(const struct AbfluxOperator *op, size_t *out);

/**
 * # Safety
 * `op` must be null or a handle not yet freed.
 */
void abflux_operator_free(struct AbfluxOperator *op);

/**
 * Smallest eigenvalue.
 *
 * # Safety
 * `op` must be a live handle and `out` a valid pointer.
 */
enum AbfluxStatus abflux_lowest_eigenvalue(const struct AbfluxOperator *op, double *out);

/**
 * Eigenvalue counts at `n` ascending energies, written to `counts[0..n]`.
 *
 * # Safety
 * `energies` and `counts` must point to `n` elements each.
 */
enum AbfluxStatus abflux_count_below(const struct AbfluxOperator *op,
                                     const double *energies,
                                     size_t n,
                                     uint64_t *counts);

/**
 * Monte Carlo IDS for `params_json` (model, k, m, boundary, energies, seed)
 * over `samples` samples; writes the curve as JSON.
 *
 * # Safety
 * `params_json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AbfluxStatus abflux_estimate_ids(const char *params_json, uint64_t samples, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ABFLUX_H */
