//! Limited-memory quasi-Newton minimizer.
//!
//! Plain L-BFGS over unconstrained vectors: the objectives eliminate their
//! bound constraints with smooth transforms (log variances, weight logits),
//! so no box handling is needed here. Directions come from the two-loop
//! recursion with the standard sᵀy/yᵀy initial Hessian scaling; steps are
//! chosen by a strong-Wolfe line search (bracket then zoom). The very first
//! step, and the first step after a memory reset, is steepest descent with
//! step length 1/‖g‖.
//!
//! A line-search failure clears the memory and retries the current
//! iteration as steepest descent; a second consecutive failure ends the
//! solve with [`SolverStatus::LineSearchFailure`] rather than an error.
//! Trial points where the callable fails or returns non-finite numbers are
//! treated as +∞, which steers the search back toward the last good
//! iterate; only a non-finite start is a hard error.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Number of curvature pairs retained.
    pub memory: usize,
    /// Cap on accepted iterations.
    pub max_iters: usize,
    /// Convergence threshold on ‖∇f‖_∞.
    pub grad_tol: f64,
    /// Convergence threshold on |Δf| / max(1, |f|) between accepted iterates.
    pub rel_obj_tol: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Trial-evaluation budget per line search.
    pub max_line_search: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            memory: 10,
            max_iters: 2000,
            grad_tol: 1e-5,
            rel_obj_tol: 1e-9,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if self.memory == 0 {
            return Err(Error::invalid("solver memory must be at least 1"));
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::invalid(format!(
                "Wolfe constants need 0 < c1 < c2 < 1, got c1 = {}, c2 = {}",
                self.c1, self.c2
            )));
        }
        if self.max_line_search == 0 {
            return Err(Error::invalid("line search needs at least one trial"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverStatus {
    /// ‖∇f‖_∞ fell below `grad_tol`.
    ConvergedGrad,
    /// Objective change between accepted iterates fell below `rel_obj_tol`.
    ConvergedObj,
    /// Iteration cap reached.
    MaxIters,
    /// No acceptable step found twice in a row.
    LineSearchFailure,
}

impl std::fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolverStatus::ConvergedGrad => "converged_grad",
            SolverStatus::ConvergedObj => "converged_obj",
            SolverStatus::MaxIters => "max_iters",
            SolverStatus::LineSearchFailure => "line_search_failure",
        })
    }
}

#[derive(Clone, Debug)]
pub struct SolverResult {
    pub x: Vec<f64>,
    /// Objective at the start point and after every accepted iteration;
    /// non-increasing.
    pub trace: Vec<f64>,
    /// ‖∇f‖_∞ at the returned point.
    pub grad_norm: f64,
    pub n_iters: usize,
    pub n_evals: usize,
    pub status: SolverStatus,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, &v| m.max(v.abs()))
}

/// One evaluated line-search trial. Unusable trials (callable error or any
/// non-finite output) act as +∞.
enum Trial {
    Usable { f: f64, g: Vec<f64>, dphi: f64 },
    Unusable,
}

struct LineSearchCtx<'a, F> {
    f: &'a mut F,
    x0: &'a [f64],
    d: &'a [f64],
    f0: f64,
    dphi0: f64,
    c1: f64,
    c2: f64,
    evals_left: usize,
    n_evals: &'a mut usize,
}

struct Accepted {
    alpha: f64,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    dphi: f64,
}

impl<'a, F> LineSearchCtx<'a, F>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn probe(&mut self, alpha: f64) -> Trial {
        let x: Vec<f64> = self
            .x0
            .iter()
            .zip(self.d)
            .map(|(xi, di)| xi + alpha * di)
            .collect();
        *self.n_evals += 1;
        match (self.f)(&x) {
            Ok((fv, g)) if fv.is_finite() && g.iter().all(|v| v.is_finite()) => {
                let dphi = dot(&g, self.d);
                Trial::Usable { f: fv, g, dphi }
            }
            _ => Trial::Unusable,
        }
    }

    fn point_at(&self, alpha: f64) -> Vec<f64> {
        self.x0
            .iter()
            .zip(self.d)
            .map(|(xi, di)| xi + alpha * di)
            .collect()
    }

    fn sufficient_decrease(&self, alpha: f64, f: f64) -> bool {
        f <= self.f0 + self.c1 * alpha * self.dphi0
    }

    fn curvature_ok(&self, dphi: f64) -> bool {
        dphi.abs() <= -self.c2 * self.dphi0
    }

    /// Bracketing phase: extend until the minimum is straddled or a Wolfe
    /// point shows up directly.
    fn search(&mut self, alpha_init: f64) -> Option<Accepted> {
        const ALPHA_MAX: f64 = 1e12;
        let mut alpha_prev = 0.0;
        let mut f_prev = self.f0;
        let mut dphi_prev = self.dphi0;
        let mut alpha = alpha_init.min(ALPHA_MAX);
        let mut first = true;
        while self.evals_left > 0 {
            self.evals_left -= 1;
            match self.probe(alpha) {
                Trial::Usable { f, g, dphi } => {
                    if !self.sufficient_decrease(alpha, f) || (!first && f >= f_prev) {
                        return self.zoom(
                            alpha_prev, f_prev, dphi_prev, alpha, f, dphi,
                        );
                    }
                    if self.curvature_ok(dphi) {
                        return Some(Accepted {
                            alpha,
                            x: self.point_at(alpha),
                            f,
                            g,
                            dphi,
                        });
                    }
                    if dphi >= 0.0 {
                        return self.zoom(alpha, f, dphi, alpha_prev, f_prev, dphi_prev);
                    }
                    alpha_prev = alpha;
                    f_prev = f;
                    dphi_prev = dphi;
                    if alpha >= ALPHA_MAX {
                        return None;
                    }
                    alpha = (2.0 * alpha).min(ALPHA_MAX);
                }
                Trial::Unusable => {
                    // +∞ at this step length: the minimum lies below.
                    return self.zoom(
                        alpha_prev,
                        f_prev,
                        dphi_prev,
                        alpha,
                        f64::INFINITY,
                        f64::NAN,
                    );
                }
            }
            first = false;
        }
        None
    }

    /// Shrinks [lo, hi] keeping the invariants: lo satisfies sufficient
    /// decrease and has the lowest usable value; the pair straddles a Wolfe
    /// point. `hi` may be unusable (+∞).
    #[allow(clippy::too_many_arguments)]
    fn zoom(
        &mut self,
        mut alpha_lo: f64,
        mut f_lo: f64,
        mut dphi_lo: f64,
        mut alpha_hi: f64,
        mut f_hi: f64,
        mut dphi_hi: f64,
    ) -> Option<Accepted> {
        while self.evals_left > 0 {
            let width = (alpha_hi - alpha_lo).abs();
            if width <= 1e-14 * alpha_lo.abs().max(1e-14) {
                return None;
            }
            let alpha = interpolate(alpha_lo, f_lo, dphi_lo, alpha_hi, f_hi, dphi_hi);
            self.evals_left -= 1;
            match self.probe(alpha) {
                Trial::Usable { f, g, dphi } => {
                    if !self.sufficient_decrease(alpha, f) || f >= f_lo {
                        alpha_hi = alpha;
                        f_hi = f;
                        dphi_hi = dphi;
                    } else {
                        if self.curvature_ok(dphi) {
                            return Some(Accepted {
                                alpha,
                                x: self.point_at(alpha),
                                f,
                                g,
                                dphi,
                            });
                        }
                        if dphi * (alpha_hi - alpha_lo) >= 0.0 {
                            alpha_hi = alpha_lo;
                            f_hi = f_lo;
                            dphi_hi = dphi_lo;
                        }
                        alpha_lo = alpha;
                        f_lo = f;
                        dphi_lo = dphi;
                    }
                }
                Trial::Unusable => {
                    alpha_hi = alpha;
                    f_hi = f64::INFINITY;
                    dphi_hi = f64::NAN;
                }
            }
        }
        None
    }
}

/// Trial step inside (lo, hi): cubic interpolation when both endpoints are
/// usable, bisection otherwise, safeguarded away from the endpoints.
fn interpolate(
    alpha_lo: f64,
    f_lo: f64,
    dphi_lo: f64,
    alpha_hi: f64,
    f_hi: f64,
    dphi_hi: f64,
) -> f64 {
    let lo = alpha_lo.min(alpha_hi);
    let hi = alpha_lo.max(alpha_hi);
    let width = hi - lo;
    let mut alpha = 0.5 * (lo + hi);
    if f_hi.is_finite() && dphi_hi.is_finite() {
        // Minimizer of the cubic matching values and slopes at both ends.
        let d1 = dphi_lo + dphi_hi - 3.0 * (f_lo - f_hi) / (alpha_lo - alpha_hi);
        let disc = d1 * d1 - dphi_lo * dphi_hi;
        if disc >= 0.0 {
            let d2 = disc.sqrt() * (alpha_hi - alpha_lo).signum();
            let denom = dphi_hi - dphi_lo + 2.0 * d2;
            if denom != 0.0 {
                let cand = alpha_hi - (alpha_hi - alpha_lo) * (dphi_hi + d2 - d1) / denom;
                if cand.is_finite() {
                    alpha = cand;
                }
            }
        }
    }
    alpha.clamp(lo + 0.1 * width, hi - 0.1 * width)
}

/// Minimizes `f` from `x0`.
///
/// `f` returns the objective value and gradient together. Failures during
/// line-search trials are survivable; a non-finite value or gradient at the
/// start point is not.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &SolverOptions) -> Result<SolverResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    opts.validate()?;
    if x0.is_empty() {
        return Err(Error::invalid("cannot minimize over an empty vector"));
    }
    let mut n_evals = 1;
    let (mut fx, mut gx) = f(x0)?;
    if !fx.is_finite() {
        return Err(Error::NonFinite {
            what: "objective value",
            iter: 0,
            iterate: x0.to_vec(),
        });
    }
    if gx.len() != x0.len() || gx.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "objective gradient",
            iter: 0,
            iterate: x0.to_vec(),
        });
    }

    let mut x = x0.to_vec();
    let mut trace = vec![fx];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iter = 0;
    let mut retried = false;
    let status;

    loop {
        if inf_norm(&gx) <= opts.grad_tol {
            status = SolverStatus::ConvergedGrad;
            break;
        }
        if iter >= opts.max_iters {
            status = SolverStatus::MaxIters;
            break;
        }

        let steepest = pairs.is_empty();
        let mut d = if steepest {
            gx.iter().map(|v| -v).collect()
        } else {
            two_loop(&gx, &pairs)
        };
        let mut dphi0 = dot(&d, &gx);
        if !(dphi0 < 0.0) {
            // Rounding produced a non-descent direction; fall back.
            pairs.clear();
            d = gx.iter().map(|v| -v).collect();
            dphi0 = -dot(&gx, &gx);
        }
        let alpha_init = if pairs.is_empty() {
            1.0 / norm2(&gx).max(f64::MIN_POSITIVE)
        } else {
            1.0
        };

        let mut ctx = LineSearchCtx {
            f: &mut f,
            x0: &x,
            d: &d,
            f0: fx,
            dphi0,
            c1: opts.c1,
            c2: opts.c2,
            evals_left: opts.max_line_search,
            n_evals: &mut n_evals,
        };
        match ctx.search(alpha_init) {
            Some(acc) => {
                debug_assert!(acc.f <= fx + opts.c1 * acc.alpha * dphi0 + 1e-10 * fx.abs().max(1.0));
                debug_assert!(acc.dphi.abs() <= -opts.c2 * dphi0 * (1.0 + 1e-12));
                let s: Vec<f64> = acc.x.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = acc.g.iter().zip(&gx).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-10 * norm2(&s) * norm2(&y) {
                    if pairs.len() == opts.memory {
                        pairs.pop_front();
                    }
                    let rho = 1.0 / sy;
                    pairs.push_back((s, y, rho));
                }
                let f_old = fx;
                x = acc.x;
                fx = acc.f;
                gx = acc.g;
                trace.push(fx);
                iter += 1;
                retried = false;
                if inf_norm(&gx) <= opts.grad_tol {
                    status = SolverStatus::ConvergedGrad;
                    break;
                }
                if (f_old - fx).abs() <= opts.rel_obj_tol * f_old.abs().max(1.0) {
                    status = SolverStatus::ConvergedObj;
                    break;
                }
            }
            None => {
                if retried {
                    status = SolverStatus::LineSearchFailure;
                    break;
                }
                // Forget the curvature history and retry this iteration as
                // steepest descent.
                pairs.clear();
                retried = true;
            }
        }
    }

    Ok(SolverResult {
        grad_norm: inf_norm(&gx),
        x,
        trace,
        n_iters: iter,
        n_evals,
        status,
    })
}

/// Two-loop recursion: applies the implicit inverse Hessian to g and
/// negates, yielding the search direction.
fn two_loop(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = vec![0.0; pairs.len()];
    for (i, (s, y, rho)) in pairs.iter().enumerate().rev() {
        let a = rho * dot(s, &q);
        alphas[i] = a;
        for (qv, yv) in q.iter_mut().zip(y) {
            *qv -= a * yv;
        }
    }
    let (s_last, y_last, _) = pairs.back().expect("two_loop needs at least one pair");
    let gamma = dot(s_last, y_last) / dot(y_last, y_last);
    for qv in q.iter_mut() {
        *qv *= gamma;
    }
    for (i, (s, y, rho)) in pairs.iter().enumerate() {
        let b = rho * dot(y, &q);
        for (qv, sv) in q.iter_mut().zip(s) {
            *qv += (alphas[i] - b) * sv;
        }
    }
    for qv in q.iter_mut() {
        *qv = -*qv;
    }
    q
}
