//! C ABI for the gradvi variational regression library.
//!
//! Fits are returned as opaque handles that own their memory until
//! `gradvi_fit_free`. Every fallible call returns an integer code; the
//! message behind the most recent failure on the calling thread is
//! available through `gradvi_last_error`. Panics are caught at the
//! boundary and surface as `GRADVI_ERR_INTERNAL`.

#![allow(non_camel_case_types)]

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;
use std::sync::Arc;

use gradvi::priors::DEFAULT_ASH_COMPONENTS;
use gradvi::{
    AshPrior, DenseOperator, Error, FitOptions, LinearOperator, ObjectiveForm, PointNormalPrior,
    Prior, RegressionData, SolverStatus,
};
use ndarray::{Array1, Array2};

/// The call succeeded.
pub const GRADVI_OK: c_int = 0;
/// An input violated a documented precondition.
pub const GRADVI_ERR_INVALID_ARGUMENT: c_int = 1;
/// A numeric routine failed to converge or produced a non-finite value.
pub const GRADVI_ERR_NUMERIC: c_int = 2;
/// An internal invariant failed; indicates a bug in the library.
pub const GRADVI_ERR_INTERNAL: c_int = 3;
/// A required pointer argument was null.
pub const GRADVI_ERR_NULL_POINTER: c_int = 4;

/// Solve in normal-means space; posterior means are inverted once at setup.
pub const GRADVI_METHOD_COMPOUND: c_int = 0;
/// Solve in coefficient space; posterior means are inverted per evaluation.
pub const GRADVI_METHOD_DIRECT: c_int = 1;

/// Scale mixture of normals on a fixed variance grid with estimated weights.
pub const GRADVI_PRIOR_ASH: c_int = 0;
/// Point mass at zero mixed with a single normal slab.
pub const GRADVI_PRIOR_POINT_NORMAL: c_int = 1;

/// The gradient sup-norm fell below the tolerance.
pub const GRADVI_STATUS_CONVERGED_GRAD: c_int = 0;
/// The relative objective change fell below the tolerance.
pub const GRADVI_STATUS_CONVERGED_OBJ: c_int = 1;
/// The iteration cap was reached.
pub const GRADVI_STATUS_MAX_ITERS: c_int = 2;
/// No acceptable step was found; the result is the best iterate seen.
pub const GRADVI_STATUS_LINE_SEARCH_FAILURE: c_int = 3;

/// Fit configuration.
///
/// Start from `gradvi_options_default` and override fields, or
/// zero-initialize: a zero in any numeric field selects that field's
/// default, and zero flags are off.
#[repr(C)]
#[derive(Clone, Copy)]
pub struct gradvi_options {
    /// `GRADVI_METHOD_COMPOUND` or `GRADVI_METHOD_DIRECT`.
    pub method: c_int,
    /// `GRADVI_PRIOR_ASH` or `GRADVI_PRIOR_POINT_NORMAL`.
    pub prior_family: c_int,
    /// Mixture components for the ash family; 0 selects the default grid.
    pub mix_components: usize,
    /// Starting noise variance; 0 selects 1.0.
    pub sigma2_init: f64,
    /// Nonzero keeps the prior at its initial value.
    pub fix_prior: c_int,
    /// Nonzero keeps the noise variance at `sigma2_init`.
    pub fix_sigma2: c_int,
    /// Nonzero rescales design columns to unit norm for the solve; reported
    /// coefficients are in the original basis either way.
    pub standardize: c_int,
    /// Cap on accepted solver iterations; 0 selects the default.
    pub max_iters: usize,
    /// Convergence threshold on the gradient sup-norm; 0 selects the
    /// default.
    pub grad_tol: f64,
}

/// A completed fit: posterior-mean coefficients, the estimated prior and
/// noise variance, and solver diagnostics. Free with `gradvi_fit_free`.
pub struct GradviFit {
    result: gradvi::FitResult,
    /// Fitted trend series; present only for trend-filtering fits.
    trend: Option<Vec<f64>>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn set_error(msg: String) {
    let c = CString::new(msg)
        .unwrap_or_else(|_| CString::new("error message contained a nul byte").expect("no nul"));
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn code_for(err: &Error) -> c_int {
    match err {
        Error::InvalidArgument(_) => GRADVI_ERR_INVALID_ARGUMENT,
        Error::BracketExpansion { .. }
        | Error::InversionStalled { .. }
        | Error::OutOfRange { .. }
        | Error::NonFinite { .. } => GRADVI_ERR_NUMERIC,
        Error::Internal(_) | Error::Io { .. } | Error::Parse { .. } => GRADVI_ERR_INTERNAL,
    }
}

fn fail(err: Error) -> c_int {
    let code = code_for(&err);
    set_error(err.to_string());
    code
}

fn null_pointer(what: &str) -> c_int {
    set_error(format!("{what}: required pointer is null"));
    GRADVI_ERR_NULL_POINTER
}

fn guarded<F: FnOnce() -> c_int>(f: F) -> c_int {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => {
            set_error("internal panic reached the C boundary".to_string());
            GRADVI_ERR_INTERNAL
        }
    }
}

/// Translates a C options struct into library options, validating codes and
/// numeric fields. A null pointer selects the defaults wholesale.
unsafe fn build_options(opts: *const gradvi_options) -> Result<FitOptions, Error> {
    let mut fo = FitOptions::default();
    let Some(o) = opts.as_ref() else {
        return Ok(fo);
    };
    fo.method = match o.method {
        GRADVI_METHOD_COMPOUND => ObjectiveForm::Compound,
        GRADVI_METHOD_DIRECT => ObjectiveForm::Direct,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown method code {other}"
            )))
        }
    };
    match o.prior_family {
        GRADVI_PRIOR_ASH => {
            if o.mix_components != 0 {
                fo.prior = Prior::Ash(AshPrior::default_with_components(o.mix_components)?);
            }
        }
        GRADVI_PRIOR_POINT_NORMAL => {
            fo.prior = Prior::PointNormal(PointNormalPrior::new(0.5, 1.0)?);
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown prior family code {other}"
            )))
        }
    }
    if o.sigma2_init != 0.0 {
        if !o.sigma2_init.is_finite() || o.sigma2_init < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "initial noise variance is {}; it must be positive",
                o.sigma2_init
            )));
        }
        fo.sigma2_init = o.sigma2_init;
    }
    fo.fix_prior = o.fix_prior != 0;
    fo.fix_sigma2 = o.fix_sigma2 != 0;
    fo.standardize = o.standardize != 0;
    if o.max_iters != 0 {
        fo.solver.max_iters = o.max_iters;
    }
    if o.grad_tol != 0.0 {
        if !o.grad_tol.is_finite() || o.grad_tol < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "gradient tolerance is {}; it must be positive",
                o.grad_tol
            )));
        }
        fo.solver.grad_tol = o.grad_tol;
    }
    Ok(fo)
}

/// Returns the default fit configuration: compound method, ash prior on the
/// default grid, estimated prior and noise variance, solver defaults.
#[no_mangle]
pub extern "C" fn gradvi_options_default() -> gradvi_options {
    let defaults = FitOptions::default();
    gradvi_options {
        method: GRADVI_METHOD_COMPOUND,
        prior_family: GRADVI_PRIOR_ASH,
        mix_components: DEFAULT_ASH_COMPONENTS,
        sigma2_init: defaults.sigma2_init,
        fix_prior: 0,
        fix_sigma2: 0,
        standardize: 0,
        max_iters: defaults.solver.max_iters,
        grad_tol: defaults.solver.grad_tol,
    }
}

/// Fits the regression y = Xb + e.
///
/// `x` is the design in row-major order with `n` rows and `p` columns, `y`
/// has `n` entries, and `init` is either null or a warm start of `p`
/// coefficients. `opts` may be null for defaults. On success `*out` owns
/// the fit and must be released with `gradvi_fit_free`; on failure `*out`
/// is untouched.
#[no_mangle]
pub unsafe extern "C" fn gradvi_fit_dense(
    x: *const f64,
    n: usize,
    p: usize,
    y: *const f64,
    init: *const f64,
    opts: *const gradvi_options,
    out: *mut *mut GradviFit,
) -> c_int {
    guarded(|| {
        clear_error();
        if x.is_null() || y.is_null() || out.is_null() {
            return null_pointer("gradvi_fit_dense");
        }
        let Some(len) = n.checked_mul(p) else {
            return fail(Error::InvalidArgument(format!(
                "design dimensions {n} x {p} overflow the address space"
            )));
        };
        let xs = unsafe { slice::from_raw_parts(x, len) };
        let ys = unsafe { slice::from_raw_parts(y, n) };
        let mut options = match unsafe { build_options(opts) } {
            Ok(o) => o,
            Err(e) => return fail(e),
        };
        if !init.is_null() {
            options.init = Some(unsafe { slice::from_raw_parts(init, p) }.to_vec());
        }
        let matrix = match Array2::from_shape_vec((n, p), xs.to_vec()) {
            Ok(m) => m,
            Err(e) => return fail(Error::InvalidArgument(e.to_string())),
        };
        let fitted = DenseOperator::new(matrix)
            .and_then(|op| {
                let op: Arc<dyn LinearOperator> = Arc::new(op);
                RegressionData::new(op, Array1::from_iter(ys.iter().copied()))
            })
            .and_then(|data| gradvi::fit(&data, &options));
        match fitted {
            Ok(result) => {
                let handle = Box::new(GradviFit {
                    result,
                    trend: None,
                });
                unsafe { *out = Box::into_raw(handle) };
                GRADVI_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Fits a trend-filtering model of the given order to a series of `n`
/// observations.
///
/// `order` is the polynomial degree of the piecewise trend (0 for
/// piecewise-constant); nonzero `scaled` applies the variance-normalized
/// basis. `opts` may be null for defaults. On success `*out` owns the fit;
/// the fitted series is available through `gradvi_fit_trend`.
#[no_mangle]
pub unsafe extern "C" fn gradvi_fit_trendfilter(
    y: *const f64,
    n: usize,
    order: usize,
    scaled: c_int,
    opts: *const gradvi_options,
    out: *mut *mut GradviFit,
) -> c_int {
    guarded(|| {
        clear_error();
        if y.is_null() || out.is_null() {
            return null_pointer("gradvi_fit_trendfilter");
        }
        let ys = unsafe { slice::from_raw_parts(y, n) };
        let options = match unsafe { build_options(opts) } {
            Ok(o) => o,
            Err(e) => return fail(e),
        };
        match gradvi::fit_trendfilter(ys, order, scaled != 0, &options) {
            Ok(tf) => {
                let handle = Box::new(GradviFit {
                    result: tf.fit,
                    trend: Some(tf.trend.to_vec()),
                });
                unsafe { *out = Box::into_raw(handle) };
                GRADVI_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of coefficients in the fit, 0 if `fit` is null.
#[no_mangle]
pub unsafe extern "C" fn gradvi_fit_num_coefficients(fit: *const GradviFit) -> usize {
    match unsafe { fit.as_ref() } {
        Some(f) => f.result.coefficients.len(),
        None => 0,
    }
}

/// Copies the posterior-mean coefficients into `buf`, which must hold
/// exactly `gradvi_fit_num_coefficients` values.
#[no_mangle]
pub unsafe extern "C" fn gradvi_fit_coefficients(
    fit: *const GradviFit,
    buf: *mut f64,
    len: usize,
) -> c_int {
    guarded(|| {
        clear_error();
        let Some(f) = (unsafe { fit.as_ref() }) else {
            return null_pointer("gradvi_fit_coefficients");
        };
        if buf.is_null() {
            return null_pointer("gradvi_fit_coefficients");
        }
        let coefs = f
            .result
            .coefficients
            .as_slice()
            .expect("owned coefficient array is contiguous");
        if len != coefs.len() {
            return fail(Error::InvalidArgument(format!(
                "buffer holds {len} values but the fit has {} coefficients",
                coefs.len()
            )));
        }
        unsafe { slice::from_raw_parts_mut(buf, len) }.copy_from_slice(coefs);
        GRADVI_OK
    })
}

/// Evidence lower bound at the fitted parameters, NaN if `fit` is null.
#[no_mangle]
pub unsafe extern "C" fn gradvi_fit_elbo(fit: *const GradviFit) -> f64 {
    match unsafe { fit.as_ref() } {
        Some(f) => f.result.elbo,
        None => f64::NAN,
    }
}

/// Estimated noise variance, NaN if `fit` is null.
#[no_mangle]
pub unsafe extern "C" fn gradvi_fit_sigma2(fit: *const GradviFit) -> f64 {
    match unsafe { fit.as_ref() } {
        Some(f) => f.result.sigma2,
        None => f64::NAN,
    }
}

/// Accepted solver iterations, 0 if `fit` is null.
#[no_mangle]
pub unsafe extern "C" fn gradvi_fit_n_iters(fit: *const GradviFit) -> usize {
    match unsafe { fit.as_ref() } {
        Some(f) => f.result.n_iters,
        None => 0,
    }
}

/// Solver termination status as a `GRADVI_STATUS_` code, -1 if `fit` is
/// null.
#[no_mangle]
pub unsafe extern "C" fn gradvi_fit_status(fit: *const GradviFit) -> c_int {
    match unsafe { fit.as_ref() } {
        Some(f) => match f.result.status {
            SolverStatus::ConvergedGrad => GRADVI_STATUS_CONVERGED_GRAD,
            SolverStatus::ConvergedObj => GRADVI_STATUS_CONVERGED_OBJ,
            SolverStatus::MaxIters => GRADVI_STATUS_MAX_ITERS,
            SolverStatus::LineSearchFailure => GRADVI_STATUS_LINE_SEARCH_FAILURE,
        },
        None => -1,
    }
}

/// Number of mixture components in the fitted prior, 0 if `fit` is null.
/// The point-normal family reports one component.
#[no_mangle]
pub unsafe extern "C" fn gradvi_fit_prior_size(fit: *const GradviFit) -> usize {
    match unsafe { fit.as_ref() } {
        Some(f) => match &f.result.prior {
            Prior::Ash(a) => a.grid().len(),
            Prior::PointNormal(_) => 1,
        },
        None => 0,
    }
}

/// Copies the fitted prior into `grid` and `weights`, each of which must
/// hold exactly `gradvi_fit_prior_size` values. For the ash family these
/// are the component variances and mixture weights; for point-normal the
/// single entry is the slab variance and slab weight.
#[no_mangle]
pub unsafe extern "C" fn gradvi_fit_prior(
    fit: *const GradviFit,
    grid: *mut f64,
    weights: *mut f64,
    len: usize,
) -> c_int {
    guarded(|| {
        clear_error();
        let Some(f) = (unsafe { fit.as_ref() }) else {
            return null_pointer("gradvi_fit_prior");
        };
        if grid.is_null() || weights.is_null() {
            return null_pointer("gradvi_fit_prior");
        }
        let (g, w): (Vec<f64>, Vec<f64>) = match &f.result.prior {
            Prior::Ash(a) => (a.grid().to_vec(), a.weights().to_vec()),
            Prior::PointNormal(pn) => (vec![pn.slab_var()], vec![pn.w()]),
        };
        if len != g.len() {
            return fail(Error::InvalidArgument(format!(
                "buffer holds {len} values but the prior has {} components",
                g.len()
            )));
        }
        unsafe { slice::from_raw_parts_mut(grid, len) }.copy_from_slice(&g);
        unsafe { slice::from_raw_parts_mut(weights, len) }.copy_from_slice(&w);
        GRADVI_OK
    })
}

/// Copies the fitted trend series into `buf`, which must hold exactly
/// `gradvi_fit_num_coefficients` values. Fails for fits not produced by
/// `gradvi_fit_trendfilter`.
#[no_mangle]
pub unsafe extern "C" fn gradvi_fit_trend(
    fit: *const GradviFit,
    buf: *mut f64,
    len: usize,
) -> c_int {
    guarded(|| {
        clear_error();
        let Some(f) = (unsafe { fit.as_ref() }) else {
            return null_pointer("gradvi_fit_trend");
        };
        if buf.is_null() {
            return null_pointer("gradvi_fit_trend");
        }
        let Some(trend) = f.trend.as_ref() else {
            return fail(Error::InvalidArgument(
                "fit has no trend series; it was not produced by gradvi_fit_trendfilter"
                    .to_string(),
            ));
        };
        if len != trend.len() {
            return fail(Error::InvalidArgument(format!(
                "buffer holds {len} values but the trend has {} points",
                trend.len()
            )));
        }
        unsafe { slice::from_raw_parts_mut(buf, len) }.copy_from_slice(trend);
        GRADVI_OK
    })
}

/// Releases a fit handle. Null is accepted and ignored.
#[no_mangle]
pub unsafe extern "C" fn gradvi_fit_free(fit: *mut GradviFit) {
    if !fit.is_null() {
        drop(unsafe { Box::from_raw(fit) });
    }
}

/// Message for the most recent failure on the calling thread, or null if
/// the last call succeeded. The pointer stays valid until the next gradvi
/// call on the same thread.
#[no_mangle]
pub unsafe extern "C" fn gradvi_last_error() -> *const c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |s| s.as_ptr())
    })
}
