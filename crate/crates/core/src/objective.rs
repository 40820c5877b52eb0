//! Penalized-regression objectives with analytic gradients.
//!
//! Minimizing either objective below over its parameters maximizes the
//! evidence lower bound of the variational regression model; the reported
//! ELBO is the negated objective value.
//!
//! Direct form, in posterior-mean coordinates b̄:
//!
//! ```text
//! h(b̄, g, σ²) = ‖y − Xb̄‖²/(2σ²) + Σ_j ρ(b̄_j, g, v_j²)
//!              − ½ Σ_j log d_j² + ((n−p)/2)·log(2πσ²)
//! ```
//!
//! with d_j² = (x_jᵀx_j)⁻¹ and v_j² = σ²d_j². The penalty ρ is defined
//! through the normal-means posterior mean operator S and its functional
//! inverse T: ρ(b) = −ℓ(T(b), g, v²) − (T(b) − b)²/(2v²). Every direct
//! evaluation inverts S once per coordinate.
//!
//! Compound form, in normal-means coordinates z with b̄ = S(z):
//!
//! ```text
//! h̃(z, g, σ²) = ‖y − X·S(z)‖²/(2σ²) + Σ_j [−ℓ(z_j) − v_j²·ℓ′(z_j)²/2]
//!              − ½ Σ_j log d_j² + ((n−p)/2)·log(2πσ²)
//! ```
//!
//! which is h after the change of variables and needs no inversion at all.
//!
//! Both evaluators are fused value-plus-gradient computations costing
//! exactly one forward and one adjoint operator product. All sums run in a
//! fixed sequential order, so repeated evaluations are bit-identical.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::invert::{invert, InversionMethod, InversionOptions};
use crate::linop::LinearOperator;
use crate::math::LN_2PI;
use crate::priors::{NmContext, Prior};

/// Inversion tolerance used inside the direct objective. Much tighter than
/// the standalone default so that gradient checks against finite
/// differences see the analytic derivatives rather than inversion error.
pub const OBJECTIVE_INVERSION_TOL: f64 = 1e-11;

/// Response, design operator, and the per-column quantities every
/// evaluation needs.
pub struct RegressionData {
    op: Arc<dyn LinearOperator>,
    y: Array1<f64>,
    d2: Array1<f64>,
    yty: f64,
    sum_log_d2: f64,
}

impl RegressionData {
    pub fn new(op: Arc<dyn LinearOperator>, y: Array1<f64>) -> Result<Self> {
        let (n, _p) = op.shape();
        if y.len() != n {
            return Err(Error::invalid(format!(
                "operator has {n} rows but the response has {} entries",
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("response contains non-finite entries"));
        }
        let norms = op.column_sq_norms();
        if norms.iter().any(|&c| !(c > 0.0) || !c.is_finite()) {
            return Err(Error::invalid(
                "every design column must have finite positive norm",
            ));
        }
        let d2 = norms.mapv(|c| 1.0 / c);
        let yty = y.dot(&y);
        let sum_log_d2 = d2.iter().map(|&d| d.ln()).sum();
        Ok(RegressionData {
            op,
            y,
            d2,
            yty,
            sum_log_d2,
        })
    }

    pub fn n(&self) -> usize {
        self.op.shape().0
    }

    pub fn p(&self) -> usize {
        self.op.shape().1
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    /// d_j² = 1/‖x_j‖² per column.
    pub fn d2(&self) -> &Array1<f64> {
        &self.d2
    }

    pub fn yty(&self) -> f64 {
        self.yty
    }

    pub fn operator(&self) -> &Arc<dyn LinearOperator> {
        &self.op
    }
}

/// Full parameter state of either objective.
///
/// The packed vector layout is [coefficient block (p entries: b̄ for the
/// direct form, z for the compound form) | prior free parameters | log σ²].
#[derive(Clone, Debug)]
pub struct PackedParams {
    pub coefs: Array1<f64>,
    pub prior: Prior,
    pub sigma2: f64,
}

impl PackedParams {
    pub fn packed_len(&self) -> usize {
        self.coefs.len() + self.prior.free_param_len() + 1
    }

    pub fn pack(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.packed_len());
        out.extend(self.coefs.iter());
        out.extend(self.prior.packed());
        out.push(self.sigma2.ln());
        out
    }

    pub fn unpack(x: &[f64], p: usize, template: &Prior) -> Result<PackedParams> {
        let m = template.free_param_len();
        if x.len() != p + m + 1 {
            return Err(Error::invalid(format!(
                "packed vector has {} entries, expected {} + {} + 1",
                x.len(),
                p,
                m
            )));
        }
        let coefs = Array1::from_iter(x[..p].iter().copied());
        let prior = template.with_packed(&x[p..p + m])?;
        let sigma2 = x[p + m].exp();
        if !sigma2.is_finite() || sigma2 <= 0.0 {
            return Err(Error::invalid(format!(
                "log sigma^2 = {} leaves the representable range",
                x[p + m]
            )));
        }
        Ok(PackedParams {
            coefs,
            prior,
            sigma2,
        })
    }
}

/// Objective value with the gradient aligned to the packed layout.
#[derive(Clone, Debug)]
pub struct ObjectiveValue {
    pub value: f64,
    pub grad: Vec<f64>,
    pub elbo: f64,
}

/// One coordinate's penalty and its partials. `d_input` differentiates
/// with respect to the evaluation point (b for the direct penalty, z for
/// the compound one); `d_prior` holds natural-parameter partials (raw
/// mixture weights for ash, (w, slab variance) for point-normal).
#[derive(Clone, Debug)]
pub struct PenaltyEval {
    pub value: f64,
    pub d_input: f64,
    pub d_prior: Vec<f64>,
    pub d_v2: f64,
}

/// ρ(b, g, v²) evaluated through the inverse operator T.
///
/// T(b) is a stationary point of t ↦ −ℓ(t) − (t−b)²/(2v²), so the partials
/// with respect to b, the prior, and v² need no dT terms:
/// d_b = (T−b)/v², d_prior = −∂ℓ/∂θ at T, d_v2 = −∂ℓ/∂s² at T + ℓ′(T)²/2.
pub fn penalty_direct(b: f64, g: &Prior, v2: f64) -> Result<PenaltyEval> {
    let opts = InversionOptions {
        tol: OBJECTIVE_INVERSION_TOL,
        method: InversionMethod::Trisection,
        ..InversionOptions::default()
    };
    let t = invert(&[b], g, &[v2], &opts)?[0];
    let ev = g.nm_eval(t, v2)?;
    let resid = t - b;
    Ok(PenaltyEval {
        value: -ev.logml - resid * resid / (2.0 * v2),
        d_input: resid / v2,
        d_prior: ev.d_prior.iter().map(|d| -d).collect(),
        d_v2: -ev.d_s2 + 0.5 * ev.d_z * ev.d_z,
    })
}

/// ρ(S(z), g, v²) = −ℓ(z) − v²ℓ′(z)²/2, differentiated as a function of z,
/// the prior, and v² directly; no inversion involved.
pub fn penalty_compound(z: f64, g: &Prior, v2: f64) -> Result<PenaltyEval> {
    let ev = g.nm_eval(z, v2)?;
    let d_prior = ev
        .d_prior
        .iter()
        .zip(&ev.d_z_prior)
        .map(|(dp, dzp)| -dp - v2 * ev.d_z * dzp)
        .collect();
    Ok(PenaltyEval {
        value: -ev.logml - 0.5 * v2 * ev.d_z * ev.d_z,
        d_input: -ev.d_z * ev.post_mean_deriv,
        d_prior,
        d_v2: -ev.d_s2 - 0.5 * ev.d_z * ev.d_z - v2 * ev.d_z * ev.d_z_s2,
    })
}

/// Maps compound coordinates back to posterior means: b̄_j = S(z_j) with
/// v_j² = σ²d_j².
pub fn recover_coefficients(
    z: &[f64],
    g: &Prior,
    sigma2: f64,
    data: &RegressionData,
) -> Result<Vec<f64>> {
    if z.len() != data.p() {
        return Err(Error::invalid(format!(
            "got {} coordinates for {} columns",
            z.len(),
            data.p()
        )));
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::invalid(format!("sigma^2 = {sigma2} must be positive")));
    }
    z.iter()
        .zip(data.d2.iter())
        .map(|(&zj, &dj)| g.posterior_mean(zj, sigma2 * dj))
        .collect()
}

/// Gradient of the full objective, one entry per block.
struct FullEval {
    value: f64,
    /// Empty when the caller asked to skip the adjoint product.
    grad_coefs: Vec<f64>,
    grad_prior_packed: Vec<f64>,
    grad_log_sigma2: f64,
}

impl FullEval {
    fn into_objective_value(self) -> ObjectiveValue {
        let mut grad = self.grad_coefs;
        grad.extend(self.grad_prior_packed);
        grad.push(self.grad_log_sigma2);
        ObjectiveValue {
            value: self.value,
            elbo: -self.value,
            grad,
        }
    }
}

/// Constant and residual terms shared by both forms:
/// ‖r‖²/(2σ²) − ½Σlog d_j² + ((n−p)/2)·log(2πσ²).
fn shared_terms(data: &RegressionData, rr: f64, sigma2: f64) -> f64 {
    let nf = data.n() as f64;
    let pf = data.p() as f64;
    0.5 * rr / sigma2 - 0.5 * data.sum_log_d2 + 0.5 * (nf - pf) * (LN_2PI + sigma2.ln())
}

fn eval_direct(
    params: &PackedParams,
    data: &RegressionData,
    need_coef_grad: bool,
    inv_timer: Option<&AtomicU64>,
) -> Result<FullEval> {
    let p = data.p();
    if params.coefs.len() != p {
        return Err(Error::invalid(format!(
            "got {} coefficients for {} columns",
            params.coefs.len(),
            p
        )));
    }
    let sigma2 = params.sigma2;
    let v2: Vec<f64> = data.d2.iter().map(|&d| d * sigma2).collect();
    let opts = InversionOptions {
        tol: OBJECTIVE_INVERSION_TOL,
        ..InversionOptions::default()
    };
    let coefs = params
        .coefs
        .as_slice()
        .expect("owned coefficient array is contiguous");
    let started = inv_timer.map(|_| Instant::now());
    let t = invert(coefs, &params.prior, &v2, &opts)?;
    if let (Some(acc), Some(t0)) = (inv_timer, started) {
        acc.fetch_add(t0.elapsed().as_nanos() as u64, Ordering::Relaxed);
    }

    let fitted = data.op.matvec(params.coefs.view());
    let r = &data.y - &fitted;
    let rr = r.dot(&r);

    let mut value = shared_terms(data, rr, sigma2);
    let mut d_prior_nat = vec![0.0; params.prior.natural_param_len()];
    let mut d_coef_pen = vec![0.0; p];
    // Σ_j (∂ρ_j/∂v_j²)·d_j², the chain from σ² into every penalty.
    let mut acc_v2 = 0.0;
    for j in 0..p {
        let ev = params.prior.nm_eval(t[j], v2[j])?;
        let resid = t[j] - coefs[j];
        value += -ev.logml - resid * resid / (2.0 * v2[j]);
        d_coef_pen[j] = resid / v2[j];
        for (acc, d) in d_prior_nat.iter_mut().zip(&ev.d_prior) {
            *acc -= d;
        }
        acc_v2 += (-ev.d_s2 + 0.5 * ev.d_z * ev.d_z) * data.d2[j];
    }

    let grad_coefs = if need_coef_grad {
        let u = data.op.rmatvec(r.view());
        (0..p).map(|j| -u[j] / sigma2 + d_coef_pen[j]).collect()
    } else {
        Vec::new()
    };
    let grad_prior_packed = params.prior.packed_grad_from_natural(&d_prior_nat)?;
    let nf = data.n() as f64;
    let pf = data.p() as f64;
    let grad_log_sigma2 = -0.5 * rr / sigma2 + sigma2 * acc_v2 + 0.5 * (nf - pf);
    Ok(FullEval {
        value,
        grad_coefs,
        grad_prior_packed,
        grad_log_sigma2,
    })
}

fn eval_compound(params: &PackedParams, data: &RegressionData) -> Result<FullEval> {
    let p = data.p();
    if params.coefs.len() != p {
        return Err(Error::invalid(format!(
            "got {} coordinates for {} columns",
            params.coefs.len(),
            p
        )));
    }
    let sigma2 = params.sigma2;
    let z = &params.coefs;
    for (j, &zj) in z.iter().enumerate() {
        if !zj.is_finite() {
            return Err(Error::invalid(format!("coordinate {j} is {zj}")));
        }
    }

    // First pass: posterior means only, to form the residual. A shared
    // context covers the homoscedastic case (equal column norms) cheaply.
    let homoscedastic = data.d2.iter().all(|&d| d == data.d2[0]);
    let mut bbar = Array1::zeros(p);
    if homoscedastic {
        let ctx = NmContext::new(&params.prior, sigma2 * data.d2[0]);
        for j in 0..p {
            bbar[j] = ctx.posterior_mean(z[j]);
        }
    } else {
        for j in 0..p {
            bbar[j] = params.prior.posterior_mean(z[j], sigma2 * data.d2[j])?;
        }
    }

    let fitted = data.op.matvec(bbar.view());
    let r = &data.y - &fitted;
    let rr = r.dot(&r);
    let u = data.op.rmatvec(r.view());

    let mut value = shared_terms(data, rr, sigma2);
    let mut grad_coefs = vec![0.0; p];
    let mut d_prior_nat = vec![0.0; params.prior.natural_param_len()];
    // Σ_j d_j²·[penalty ∂/∂v_j² − (u_j/σ²)·∂S_j/∂v_j²], the σ² chain
    // through both the penalty and the residual.
    let mut acc_sigma = 0.0;
    for j in 0..p {
        let v2 = sigma2 * data.d2[j];
        let ev = params.prior.nm_eval(z[j], v2)?;
        value += -ev.logml - 0.5 * v2 * ev.d_z * ev.d_z;
        // u_j/σ² + ℓ′ multiplies every chain through b̄_j = S(z_j).
        let w = u[j] / sigma2 + ev.d_z;
        grad_coefs[j] = -ev.post_mean_deriv * w;
        for ((acc, dp), dzp) in d_prior_nat
            .iter_mut()
            .zip(&ev.d_prior)
            .zip(&ev.d_z_prior)
        {
            *acc += -dp - v2 * dzp * w;
        }
        let pen_d_v2 = -ev.d_s2 - 0.5 * ev.d_z * ev.d_z - v2 * ev.d_z * ev.d_z_s2;
        acc_sigma += data.d2[j] * (pen_d_v2 - (u[j] / sigma2) * (ev.d_z + v2 * ev.d_z_s2));
    }

    let grad_prior_packed = params.prior.packed_grad_from_natural(&d_prior_nat)?;
    let nf = data.n() as f64;
    let pf = data.p() as f64;
    let grad_log_sigma2 = -0.5 * rr / sigma2 + sigma2 * acc_sigma + 0.5 * (nf - pf);
    Ok(FullEval {
        value,
        grad_coefs,
        grad_prior_packed,
        grad_log_sigma2,
    })
}

/// h(b̄, g, σ²) and its gradient over the packed layout.
pub fn objective_direct(params: &PackedParams, data: &RegressionData) -> Result<ObjectiveValue> {
    Ok(eval_direct(params, data, true, None)?.into_objective_value())
}

/// h̃(z, g, σ²) and its gradient over the packed layout.
pub fn objective_compound(params: &PackedParams, data: &RegressionData) -> Result<ObjectiveValue> {
    Ok(eval_compound(params, data)?.into_objective_value())
}

/// Which parameter blocks an optimizer run may move.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ActiveBlocks {
    pub coefs: bool,
    pub prior: bool,
    pub sigma2: bool,
}

impl ActiveBlocks {
    pub fn all() -> Self {
        ActiveBlocks {
            coefs: true,
            prior: true,
            sigma2: true,
        }
    }

    /// Prior block alone, used by the warm-up phase of a fit.
    pub fn prior_only() -> Self {
        ActiveBlocks {
            coefs: false,
            prior: true,
            sigma2: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjectiveForm {
    Direct,
    Compound,
}

/// An objective restricted to its active blocks, presenting the flat
/// vector interface a generic minimizer expects. Inactive blocks stay
/// frozen at their values in `base`.
pub struct BoundObjective<'a> {
    data: &'a RegressionData,
    form: ObjectiveForm,
    blocks: ActiveBlocks,
    base: PackedParams,
    inv_timer: Option<Arc<AtomicU64>>,
}

impl<'a> BoundObjective<'a> {
    pub fn new(
        data: &'a RegressionData,
        form: ObjectiveForm,
        blocks: ActiveBlocks,
        base: PackedParams,
    ) -> Result<Self> {
        if base.coefs.len() != data.p() {
            return Err(Error::invalid(format!(
                "base state has {} coefficients for {} columns",
                base.coefs.len(),
                data.p()
            )));
        }
        if !(blocks.coefs || blocks.prior || blocks.sigma2) {
            return Err(Error::invalid("no parameter block is active"));
        }
        if !(base.sigma2 > 0.0) || !base.sigma2.is_finite() {
            return Err(Error::invalid(format!(
                "sigma^2 = {} must be positive",
                base.sigma2
            )));
        }
        Ok(BoundObjective {
            data,
            form,
            blocks,
            base,
            inv_timer: None,
        })
    }

    /// Accumulates nanoseconds spent inverting the posterior-mean map into
    /// `acc`. Only the direct form inverts per evaluation, so this records
    /// nothing under the compound form.
    pub fn with_inversion_timer(mut self, acc: Arc<AtomicU64>) -> Self {
        self.inv_timer = Some(acc);
        self
    }

    pub fn dim(&self) -> usize {
        let mut d = 0;
        if self.blocks.coefs {
            d += self.data.p();
        }
        if self.blocks.prior {
            d += self.base.prior.free_param_len();
        }
        if self.blocks.sigma2 {
            d += 1;
        }
        d
    }

    /// Active blocks of `base`, packed in layout order.
    pub fn initial(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        if self.blocks.coefs {
            x.extend(self.base.coefs.iter());
        }
        if self.blocks.prior {
            x.extend(self.base.prior.packed());
        }
        if self.blocks.sigma2 {
            x.push(self.base.sigma2.ln());
        }
        x
    }

    /// Merges an active-block vector with the frozen blocks.
    pub fn params_from(&self, x: &[f64]) -> Result<PackedParams> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "active vector has {} entries, expected {}",
                x.len(),
                self.dim()
            )));
        }
        let mut at = 0;
        let coefs = if self.blocks.coefs {
            let p = self.data.p();
            at += p;
            Array1::from_iter(x[..p].iter().copied())
        } else {
            self.base.coefs.clone()
        };
        let prior = if self.blocks.prior {
            let m = self.base.prior.free_param_len();
            let block = &x[at..at + m];
            at += m;
            self.base.prior.with_packed(block)?
        } else {
            self.base.prior.clone()
        };
        let sigma2 = if self.blocks.sigma2 {
            let s = x[at].exp();
            if !s.is_finite() || s <= 0.0 {
                return Err(Error::invalid(format!(
                    "log sigma^2 = {} leaves the representable range",
                    x[at]
                )));
            }
            s
        } else {
            self.base.sigma2
        };
        Ok(PackedParams {
            coefs,
            prior,
            sigma2,
        })
    }

    /// Value and active-block gradient at `x`.
    pub fn eval(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let params = self.params_from(x)?;
        let full = match self.form {
            ObjectiveForm::Direct => {
                eval_direct(&params, self.data, self.blocks.coefs, self.inv_timer.as_deref())?
            }
            ObjectiveForm::Compound => eval_compound(&params, self.data)?,
        };
        let mut grad = Vec::with_capacity(self.dim());
        if self.blocks.coefs {
            grad.extend(full.grad_coefs);
        }
        if self.blocks.prior {
            grad.extend(full.grad_prior_packed);
        }
        if self.blocks.sigma2 {
            grad.push(full.grad_log_sigma2);
        }
        Ok((full.value, grad))
    }
}
