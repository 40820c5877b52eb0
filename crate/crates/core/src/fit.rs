//! High-level fitting: initialization, prior warm-up, the quasi-Newton
//! solve, and result assembly.
//!
//! A fit owns three decisions beyond the raw objective. First, how to start:
//! null coefficients by default, or a user-supplied warm start, with the
//! compound form mapping the start into normal-means space through one
//! inversion under the initial prior. Second, whether to warm the prior up
//! first: a short prior-only solve with coefficients and noise frozen, which
//! keeps an informative warm start from being undone by an ill-fitting
//! default prior. Third, bookkeeping: wall time split into operator products
//! and posterior-mean inversions, and the objective trace reported on the
//! ELBO scale.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::invert::{invert, InversionOptions};
use crate::linop::{tf_operator, ColumnScaledOperator, LinearOperator};
use crate::objective::{
    recover_coefficients, ActiveBlocks, BoundObjective, ObjectiveForm, PackedParams,
    RegressionData, OBJECTIVE_INVERSION_TOL,
};
use crate::optim::{minimize, SolverOptions, SolverStatus};
use crate::priors::{AshPrior, Prior, DEFAULT_ASH_COMPONENTS};

/// Prior-only iterations granted to a warm-started fit that does not set
/// an explicit budget.
const DEFAULT_WARMUP_ITERS: usize = 50;

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub method: ObjectiveForm,
    /// Initial prior; also the fixed prior when `fix_prior` is set.
    pub prior: Prior,
    /// Warm-start coefficients in the design's own basis; null start when
    /// absent.
    pub init: Option<Vec<f64>>,
    /// Prior-only warm-up budget. Unset means 50 iterations for a
    /// warm-started fit and none otherwise.
    pub prior_warmup_iters: Option<usize>,
    pub sigma2_init: f64,
    /// Keep the prior at its initial value.
    pub fix_prior: bool,
    /// Keep the noise variance at `sigma2_init`.
    pub fix_sigma2: bool,
    /// Rescale columns to unit norm for the solve; reported coefficients
    /// are mapped back to the original basis.
    pub standardize: bool,
    pub solver: SolverOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            method: ObjectiveForm::Compound,
            prior: Prior::Ash(
                AshPrior::default_with_components(DEFAULT_ASH_COMPONENTS)
                    .expect("default component count is positive"),
            ),
            init: None,
            prior_warmup_iters: None,
            sigma2_init: 1.0,
            fix_prior: false,
            fix_sigma2: false,
            standardize: false,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct FitTimings {
    pub total_secs: f64,
    /// Time inside forward and adjoint operator products.
    pub matvec_secs: f64,
    /// Time inside posterior-mean inversions (per-evaluation for the
    /// direct form, initialization only for the compound form).
    pub inversion_secs: f64,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    /// Posterior-mean coefficients in the original basis.
    pub coefficients: Array1<f64>,
    pub prior: Prior,
    pub sigma2: f64,
    /// Evidence lower bound at the returned parameters.
    pub elbo: f64,
    /// ELBO after each accepted step, warm-up included; nondecreasing.
    pub elbo_trace: Vec<f64>,
    /// Quasi-Newton iterations in the main solve.
    pub n_iters: usize,
    /// Objective evaluations in the main solve.
    pub n_evals: usize,
    pub status: SolverStatus,
    pub timings: FitTimings,
}

/// Operator wrapper that accumulates time spent in products.
struct TimingOperator {
    inner: Arc<dyn LinearOperator>,
    nanos: Arc<AtomicU64>,
}

impl LinearOperator for TimingOperator {
    fn shape(&self) -> (usize, usize) {
        self.inner.shape()
    }

    fn matvec(&self, v: ArrayView1<f64>) -> Array1<f64> {
        let t0 = Instant::now();
        let out = self.inner.matvec(v);
        self.nanos
            .fetch_add(t0.elapsed().as_nanos() as u64, Ordering::Relaxed);
        out
    }

    fn rmatvec(&self, w: ArrayView1<f64>) -> Array1<f64> {
        let t0 = Instant::now();
        let out = self.inner.rmatvec(w);
        self.nanos
            .fetch_add(t0.elapsed().as_nanos() as u64, Ordering::Relaxed);
        out
    }

    fn column_sq_norms(&self) -> Array1<f64> {
        self.inner.column_sq_norms()
    }

    fn to_dense(&self) -> Array2<f64> {
        self.inner.to_dense()
    }
}

pub fn fit(data: &RegressionData, opts: &FitOptions) -> Result<FitResult> {
    let t_total = Instant::now();
    let p = data.p();
    if !(opts.sigma2_init > 0.0) || !opts.sigma2_init.is_finite() {
        return Err(Error::invalid(format!(
            "sigma2_init = {} must be positive",
            opts.sigma2_init
        )));
    }
    if let Some(b0) = &opts.init {
        if b0.len() != p {
            return Err(Error::invalid(format!(
                "warm start has {} entries for {} columns",
                b0.len(),
                p
            )));
        }
    }

    // Operator chain: optional unit-column rescale, then the product timer.
    // The solve runs in the rescaled basis; `scale` maps results back.
    let base_op = data.operator().clone();
    let mut scale: Option<Vec<f64>> = None;
    let design: Arc<dyn LinearOperator> = if opts.standardize {
        let scaled = ColumnScaledOperator::to_unit_columns(base_op)?;
        scale = Some(scaled.scale().to_vec());
        Arc::new(scaled)
    } else {
        base_op
    };
    let matvec_nanos = Arc::new(AtomicU64::new(0));
    let work = RegressionData::new(
        Arc::new(TimingOperator {
            inner: design,
            nanos: matvec_nanos.clone(),
        }),
        data.y().clone(),
    )?;

    let sigma2 = opts.sigma2_init;
    let b_init: Array1<f64> = match &opts.init {
        Some(b0) => match &scale {
            // X·b = (X·diag(s))·(b/s): divide to enter the scaled basis.
            Some(s) => Array1::from_iter(b0.iter().zip(s).map(|(&b, &sj)| b / sj)),
            None => Array1::from_iter(b0.iter().copied()),
        },
        None => Array1::zeros(p),
    };

    let mut init_inv_nanos = 0_u64;
    let coefs0 = match opts.method {
        ObjectiveForm::Direct => b_init,
        ObjectiveForm::Compound => {
            if b_init.iter().all(|&b| b == 0.0) {
                b_init
            } else {
                let v2: Vec<f64> = work.d2().iter().map(|&d| d * sigma2).collect();
                let inv_opts = InversionOptions {
                    tol: OBJECTIVE_INVERSION_TOL,
                    ..InversionOptions::default()
                };
                let t0 = Instant::now();
                let z = invert(
                    b_init.as_slice().expect("contiguous"),
                    &opts.prior,
                    &v2,
                    &inv_opts,
                )?;
                init_inv_nanos = t0.elapsed().as_nanos() as u64;
                Array1::from_vec(z)
            }
        }
    };

    let obj_inv_nanos = Arc::new(AtomicU64::new(0));
    let mut params = PackedParams {
        coefs: coefs0,
        prior: opts.prior.clone(),
        sigma2,
    };

    // Prior-only warm-up with coefficients and noise frozen. Its final
    // trace entry equals the main solve's first, so it is dropped.
    let warmup_iters = opts
        .prior_warmup_iters
        .unwrap_or(if opts.init.is_some() { DEFAULT_WARMUP_ITERS } else { 0 });
    let mut warm_trace: Vec<f64> = Vec::new();
    if warmup_iters > 0 && !opts.fix_prior && params.prior.free_param_len() > 0 {
        let bound = BoundObjective::new(
            &work,
            opts.method,
            ActiveBlocks::prior_only(),
            params.clone(),
        )?
        .with_inversion_timer(obj_inv_nanos.clone());
        let warm_opts = SolverOptions {
            max_iters: warmup_iters,
            ..opts.solver.clone()
        };
        let res = minimize(|x| bound.eval(x), &bound.initial(), &warm_opts)?;
        params = bound.params_from(&res.x)?;
        warm_trace = res.trace;
        warm_trace.pop();
    }

    let blocks = ActiveBlocks {
        coefs: true,
        prior: !opts.fix_prior,
        sigma2: !opts.fix_sigma2,
    };
    let bound = BoundObjective::new(&work, opts.method, blocks, params)?
        .with_inversion_timer(obj_inv_nanos.clone());
    let res = minimize(|x| bound.eval(x), &bound.initial(), &opts.solver)?;
    let solution = bound.params_from(&res.x)?;

    let final_value = *res.trace.last().expect("trace holds the initial value");
    let elbo_trace: Vec<f64> = warm_trace
        .iter()
        .chain(res.trace.iter())
        .map(|&h| -h)
        .collect();

    let bbar_work = match opts.method {
        ObjectiveForm::Direct => solution.coefs,
        ObjectiveForm::Compound => Array1::from_vec(recover_coefficients(
            solution.coefs.as_slice().expect("contiguous"),
            &solution.prior,
            solution.sigma2,
            &work,
        )?),
    };
    let coefficients = match &scale {
        Some(s) => Array1::from_iter(bbar_work.iter().zip(s).map(|(&b, &sj)| b * sj)),
        None => bbar_work,
    };

    Ok(FitResult {
        coefficients,
        prior: solution.prior,
        sigma2: solution.sigma2,
        elbo: -final_value,
        elbo_trace,
        n_iters: res.n_iters,
        n_evals: res.n_evals,
        status: res.status,
        timings: FitTimings {
            total_secs: t_total.elapsed().as_secs_f64(),
            matvec_secs: matvec_nanos.load(Ordering::Relaxed) as f64 * 1e-9,
            inversion_secs: (init_inv_nanos + obj_inv_nanos.load(Ordering::Relaxed)) as f64
                * 1e-9,
        },
    })
}

pub struct TrendFit {
    pub fit: FitResult,
    /// Fitted trend, the design applied to the coefficients.
    pub trend: Array1<f64>,
}

/// Fits a trend-filtering model of the given order to an observed series.
pub fn fit_trendfilter(
    y: &[f64],
    order: usize,
    scaled: bool,
    opts: &FitOptions,
) -> Result<TrendFit> {
    if y.len() < order + 2 {
        return Err(Error::invalid(format!(
            "order {} trend filtering needs at least {} points, got {}",
            order,
            order + 2,
            y.len()
        )));
    }
    let op: Arc<dyn LinearOperator> = Arc::new(tf_operator(y.len(), order, scaled)?);
    let data = RegressionData::new(op.clone(), Array1::from_iter(y.iter().copied()))?;
    let fit = self::fit(&data, opts)?;
    let trend = op.matvec(fit.coefficients.view());
    Ok(TrendFit { fit, trend })
}
