/* C interface to the gradvi variational regression library. */

#ifndef GRADVI_H
#define GRADVI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * The call succeeded.
 */
#define GRADVI_OK 0

/**
 * An input violated a documented precondition.
 */
#define GRADVI_ERR_INVALID_ARGUMENT 1

/**
 * A numeric routine failed to converge or produced a non-finite value.
 */
#define GRADVI_ERR_NUMERIC 2

/**
 * An internal invariant failed; indicates a bug in the library.
 */
#define GRADVI_ERR_INTERNAL 3

/**
 * A required pointer argument was null.
 */
#define GRADVI_ERR_NULL_POINTER 4

/**
 * Solve in normal-means space; posterior means are inverted once at setup.
 */
#define GRADVI_METHOD_COMPOUND 0

/**
 * Solve in coefficient space; posterior means are inverted per evaluation.
 */
#define GRADVI_METHOD_DIRECT 1

/**
 * Scale mixture of normals on a fixed variance grid with estimated weights.
 */
#define GRADVI_PRIOR_ASH 0

/**
 * Point mass at zero mixed with a single normal slab.
 */
#define GRADVI_PRIOR_POINT_NORMAL 1

/**
 * The gradient sup-norm fell below the tolerance.
 */
#define GRADVI_STATUS_CONVERGED_GRAD 0

/**
 * The relative objective change fell below the tolerance.
 */
#define GRADVI_STATUS_CONVERGED_OBJ 1

/**
 * The iteration cap was reached.
 */
#define GRADVI_STATUS_MAX_ITERS 2

/**
 * No acceptable step was found; the result is the best iterate seen.
 */
#define GRADVI_STATUS_LINE_SEARCH_FAILURE 3

/**
 * A completed fit: posterior-mean coefficients, the estimated prior and
 * noise variance, and solver diagnostics. Free with `gradvi_fit_free`.
 */
typedef struct GradviFit GradviFit;

/**
 * Fit configuration.
 *
 * Start from `gradvi_options_default` and override fields, or
 * zero-initialize: a zero in any numeric field selects that field's
 * default, and zero flags are off.
 */
typedef struct gradvi_options {
  /**
   * `GRADVI_METHOD_COMPOUND` or `GRADVI_METHOD_DIRECT`.
   */
  int method;
  /**
   * `GRADVI_PRIOR_ASH` or `GRADVI_PRIOR_POINT_NORMAL`.
   */
  int prior_family;
  /**
   * Mixture components for the ash family; 0 selects the default grid.
   */
  size_t mix_components;
  /**
   * Starting noise variance; 0 selects 1.0.
   */
  double sigma2_init;
  /**
   * Nonzero keeps the prior at its initial value.
   */
  int fix_prior;
  /**
   * Nonzero keeps the noise variance at `sigma2_init`.
   */
  int fix_sigma2;
  /**
   * Nonzero rescales design columns to unit norm for the solve; reported
   * coefficients are in the original basis either way.
   */
  int standardize;
  /**
   * Cap on accepted solver iterations; 0 selects the default.
   */
  size_t max_iters;
  /**
   * Convergence threshold on the gradient sup-norm; 0 selects the
   * default.
   */
  double grad_tol;
} gradvi_options;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Returns the default fit configuration: compound method, ash prior on the
 * default grid, estimated prior and noise variance, solver defaults.
 */
struct gradvi_options gradvi_options_default(void);

/**
 * Fits the regression y = Xb + e.
 *
 * `x` is the design in row-major order with `n` rows and `p` columns, `y`
 * has `n` entries, and `init` is either null or a warm start of `p`
 * coefficients. `opts` may be null for defaults. On success `*out` owns
 * the fit and must be released with `gradvi_fit_free`; on failure `*out`
 * is untouched.
 */
int gradvi_fit_dense(const double *x,
                     size_t n,
                     size_t p,
                     const double *y,
                     const double *init,
                     const struct gradvi_options *opts,
                     struct GradviFit **out);

/**
 * Fits a trend-filtering model of the given order to a series of `n`
 * observations.
 *
 * `order` is the polynomial degree of the piecewise trend (0 for
 * piecewise-constant); nonzero `scaled` applies the variance-normalized
 * basis. `opts` may be null for defaults. On success `*out` owns the fit;
 * the fitted series is available through `gradvi_fit_trend`.
 */
int gradvi_fit_trendfilter(const double *y,
                           size_t n,
                           size_t order,
                           int scaled,
                           const struct gradvi_options *opts,
                           struct GradviFit **out);

/**
 * Number of coefficients in the fit, 0 if `fit` is null.
 */
size_t gradvi_fit_num_coefficients(const struct GradviFit *fit);

/**
 * Copies the posterior-mean coefficients into `buf`, which must hold
 * exactly `gradvi_fit_num_coefficients` values.
 */
int gradvi_fit_coefficients(const struct GradviFit *fit, double *buf, size_t len);

/**
 * Evidence lower bound at the fitted parameters, NaN if `fit` is null.
 */
double gradvi_fit_elbo(const struct GradviFit *fit);

/**
 * Estimated noise variance, NaN if `fit` is null.
 */
double gradvi_fit_sigma2(const struct GradviFit *fit);

/**
 * Accepted solver iterations, 0 if `fit` is null.
 */
size_t gradvi_fit_n_iters(const struct GradviFit *fit);

/**
 * Solver termination status as a `GRADVI_STATUS_` code, -1 if `fit` is
 * null.
 */
int gradvi_fit_status(const struct GradviFit *fit);

/**
 * Number of mixture components in the fitted prior, 0 if `fit` is null.
 * The point-normal family reports one component.
 */
size_t gradvi_fit_prior_size(const struct GradviFit *fit);

/**
 * Copies the fitted prior into `grid` and `weights`, each of which must
 * hold exactly `gradvi_fit_prior_size` values. For the ash family these
 * are the component variances and mixture weights; for point-normal the
 * single entry is the slab variance and slab weight.
 */
int gradvi_fit_prior(const struct GradviFit *fit, double *grid, double *weights, size_t len);

/**
 * Copies the fitted trend series into `buf`, which must hold exactly
 * `gradvi_fit_num_coefficients` values. Fails for fits not produced by
 * `gradvi_fit_trendfilter`.
 */
int gradvi_fit_trend(const struct GradviFit *fit, double *buf, size_t len);

/**
 * Releases a fit handle. Null is accepted and ignored.
 */
void gradvi_fit_free(struct GradviFit *fit);

/**
 * Message for the most recent failure on the calling thread, or null if
 * the last call succeeded. The pointer stays valid until the next gradvi
 * call on the same thread.
 */
const char *gradvi_last_error(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRADVI_H */
