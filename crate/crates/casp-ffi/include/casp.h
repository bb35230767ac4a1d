#ifndef CASP_FFI_H
#define CASP_FFI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of an FFI call.
 */
typedef enum {
  CASP_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  CASP_STATUS_NULL_ARGUMENT = 1,
  /**
   * Sizes, bounds or values were invalid.
   */
  CASP_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The cardinality/box constraints describe an empty feasible region.
   */
  CASP_STATUS_INFEASIBLE_CONSTRAINTS = 3,
  /**
   * The QP solver did not reach the requested tolerance.
   */
  CASP_STATUS_CONVERGENCE_FAILURE = 4,
  /**
   * An unexpected internal failure (never expected; check the message).
   */
  CASP_STATUS_INTERNAL_ERROR = 5,
} CaspStatus;

/**
 * The seven repair methods.
 */
typedef enum {
  CASP_METHOD_EUCLIDEAN = 0,
  CASP_METHOD_VOLNORM_EUC = 1,
  CASP_METHOD_MINVAR_EUC = 2,
  CASP_METHOD_SHARPE_EUC = 3,
  CASP_METHOD_CASP_BASIC = 4,
  CASP_METHOD_CASP_RETSEL = 5,
  CASP_METHOD_RA_CASP = 6,
} CaspMethod;

/**
 * Opaque market handle: expected returns, covariance and ESG scores.
 */
typedef struct CaspModel CaspModel;

/**
 * Projection diagnostics mirrored into C.
 */
typedef struct {
  /**
   * Achieved ½(w−z)ᵀM(w−z) under the projection metric.
   */
  double objective_value;
  /**
   * Max violation across budget, bounds, stationarity, complementarity.
   */
  double kkt_residual;
  /**
   * Solver iterations.
   */
  uint64_t iterations;
  /**
   * 1 when the metric needed an eigenvalue-floor ridge.
   */
  uint8_t regularized;
  /**
   * 1 when every selection score was zero and the lowest-index fallback
   * active set was used.
   */
  uint8_t degenerate_selection;
} CaspQpReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Build a market handle from raw arrays.
 *
 * * `omega_row_major` — n×n covariance, row major, symmetrized internally.
 * * `mu`, `esg` — length n; may be NULL, in which case zeros are used
 *   (sufficient for the return-agnostic methods).
 *
 * On success writes a handle to `*out`; free it with [`casp_model_free`].
 *
 * # Safety
 * `omega_row_major` must point to n·n readable doubles; `mu` and `esg`,
 * when non-null, to n readable doubles; `out` must be a valid writable
 * pointer.
 */
CaspStatus casp_model_new(uintptr_t n_assets,
                          const double *mu,
                          const double *omega_row_major,
                          const double *esg,
                          CaspModel **out);

/**
 * Release a handle produced by [`casp_model_new`]. NULL is a no-op.
 *
 * # Safety
 * `model` must be a pointer previously returned by [`casp_model_new`] and
 * not yet freed.
 */
void casp_model_free(CaspModel *model);

/**
 * Number of assets behind a handle (0 for NULL).
 *
 * # Safety
 * `model`, when non-null, must be a live handle from [`casp_model_new`].
 */
uintptr_t casp_model_len(const CaspModel *model);

/**
 * Repair a raw candidate onto the feasible region.
 *
 * * `z` — length-n candidate (any sign, any sum).
 * * `k`, `lower`, `upper` — cardinality limit and per-asset bounds.
 * * `lambda`, `gamma` — return-awareness parameters for the return-aware
 *   methods (ignored otherwise); `risk_free` feeds the Sharpe selection.
 * * `out_weights` — length-n buffer receiving the dense repaired weights
 *   (zeros off the active set).
 * * `out_report` — optional diagnostics; may be NULL.
 *
 * # Safety
 * `z` and `out_weights` must point to n readable/writable doubles for the
 * model's n; `out_report`, when non-null, must be writable.
 */
CaspStatus casp_repair(const CaspModel *model,
                       uintptr_t k,
                       double lower,
                       double upper,
                       CaspMethod method,
                       double lambda,
                       double gamma,
                       double risk_free,
                       const double *z,
                       double *out_weights,
                       CaspQpReport *out_report);

/**
 * Euclidean projection onto `{w : Σw = 1, lower ≤ w ≤ upper}`.
 *
 * `z` and `out_weights` are length-k buffers.
 *
 * # Safety
 * `z` must point to k readable doubles and `out_weights` to k writable
 * doubles.
 */
CaspStatus casp_project_simplex_box(const double *z,
                                    uintptr_t k,
                                    double lower,
                                    double upper,
                                    double tol,
                                    double *out_weights);

/**
 * Covariance-metric projection: minimize ½(w−z)ᵀΩ(w−z) over the
 * box-constrained simplex. `omega_row_major` is k×k.
 *
 * # Safety
 * `z` and `out_weights` must cover k doubles, `omega_row_major` k·k;
 * `out_report`, when non-null, must be writable.
 */
CaspStatus casp_project_omega(const double *z,
                              const double *omega_row_major,
                              uintptr_t k,
                              double lower,
                              double upper,
                              double tol,
                              double *out_weights,
                              CaspQpReport *out_report);

/**
 * Copy the calling thread's last error message (NUL-terminated) into `buf`.
 * Returns the full message length in bytes (excluding the NUL); when it
 * exceeds `len − 1` the copy is truncated. `buf` may be NULL to query the
 * length.
 *
 * # Safety
 * `buf`, when non-null, must point to `len` writable bytes.
 */
uintptr_t casp_last_error_message(char *buf, uintptr_t len);

/**
 * Static version string of the underlying library.
 */
const char *casp_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CASP_FFI_H */
