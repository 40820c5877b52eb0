//! Prior families and the normal-means quantities built on them.
//!
//! A normal-means problem observes z ~ N(μ, s²) with μ drawn from a prior g.
//! Everything the regression objectives need reduces to the log marginal
//! likelihood
//!
//!   ℓ(z, g, s²) = ln ∫ N(z | μ, s²) g(dμ)
//!
//! together with its partial derivatives in z, the prior parameters, and s²,
//! and the posterior mean S(z) = z + s²·∂ℓ/∂z with its slope S′(z).
//!
//! Two families ship:
//!
//! * [`AshPrior`]: a K-component mixture of zero-mean normals with a fixed
//!   variance grid and free mixture weights. A grid variance of exactly zero
//!   is a point mass at the origin.
//! * [`PointNormalPrior`]: spike-and-slab, (1-w)·δ₀ + w·N(0, σ₁²).
//!
//! Both are scale mixtures of normals, so the marginal is itself a normal
//! mixture with component variances σ_k² + s². All evaluations run in log
//! space through [`log_sum_exp`]; responsibilities are exponentiated
//! differences, which keeps every path finite for |z| up to 1e6 and for
//! weights that include exact zeros.
//!
//! Derivatives with respect to ash weights are taken in raw weight space
//! (the weights are treated as free nonnegative numbers, not as a simplex).
//! The softmax chain rule that confines the optimizer to the simplex lives
//! in the objective layer; [`Prior::packed_grad_from_natural`] applies it.

use crate::error::{Error, Result};
use crate::math::{expit, log_sum_exp, logit, LN_2PI};

/// Default number of ash mixture components.
pub const DEFAULT_ASH_COMPONENTS: usize = 20;

/// The default ash variance grid: σ_k² = (2^((k-1)/K) - 1)² for k = 1..K.
///
/// The first entry is exactly zero (a point mass at the origin).
pub fn default_ash_grid(k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| {
            let r = (i as f64 / k as f64).exp2() - 1.0;
            r * r
        })
        .collect()
}

/// Scale mixture of zero-mean normals with a fixed variance grid.
#[derive(Clone, Debug, PartialEq)]
pub struct AshPrior {
    grid: Vec<f64>,
    weights: Vec<f64>,
}

impl AshPrior {
    /// Builds an ash prior from a variance grid and matching weights.
    ///
    /// Weights must be finite, nonnegative, and not all zero. They are used
    /// as given; normalization is the caller's concern (fits reach this type
    /// through a softmax, which always lands on the simplex).
    pub fn new(grid: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::invalid("ash grid must be non-empty"));
        }
        if grid.len() != weights.len() {
            return Err(Error::invalid(format!(
                "ash grid has {} components but {} weights were given",
                grid.len(),
                weights.len()
            )));
        }
        for (k, &v) in grid.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!(
                    "ash grid variance {k} is {v}; variances must be finite and >= 0"
                )));
            }
        }
        let mut total = 0.0;
        for (k, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::invalid(format!(
                    "ash weight {k} is {w}; weights must be finite and >= 0"
                )));
            }
            total += w;
        }
        if total <= 0.0 {
            return Err(Error::invalid("ash weights must not all be zero"));
        }
        Ok(AshPrior { grid, weights })
    }

    /// Equal weights on the default grid with `k` components.
    pub fn default_with_components(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("ash prior needs at least one component"));
        }
        AshPrior::new(default_ash_grid(k), vec![1.0 / k as f64; k])
    }

    pub fn n_components(&self) -> usize {
        self.grid.len()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Spike-and-slab prior (1-w)·δ₀ + w·N(0, slab_var).
#[derive(Clone, Debug, PartialEq)]
pub struct PointNormalPrior {
    w: f64,
    slab_var: f64,
}

impl PointNormalPrior {
    pub fn new(w: f64, slab_var: f64) -> Result<Self> {
        if !w.is_finite() || !(0.0..=1.0).contains(&w) {
            return Err(Error::invalid(format!(
                "point-normal slab weight is {w}; it must lie in [0, 1]"
            )));
        }
        if !slab_var.is_finite() || slab_var < 0.0 {
            return Err(Error::invalid(format!(
                "point-normal slab variance is {slab_var}; it must be finite and >= 0"
            )));
        }
        Ok(PointNormalPrior { w, slab_var })
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn slab_var(&self) -> f64 {
        self.slab_var
    }
}

/// A prior over effect sizes, one of the shipped families.
#[derive(Clone, Debug, PartialEq)]
pub enum Prior {
    Ash(AshPrior),
    PointNormal(PointNormalPrior),
}

/// Log marginal likelihood of one normal-means observation and every partial
/// derivative the regression objectives consume.
///
/// `d_prior` and `d_z_prior` are indexed by the family's natural parameters:
/// one entry per mixture weight for ash, `[w, slab_var]` for point-normal.
/// The mixed partials (`d_z_prior`, `d_z_s2`) are derivatives of `d_z`; the
/// reparameterized objective needs them to differentiate the posterior mean
/// with respect to the prior and the residual variance.
#[derive(Clone, Debug)]
pub struct NmEval {
    /// ℓ(z, g, s²).
    pub logml: f64,
    /// ∂ℓ/∂z.
    pub d_z: f64,
    /// ∂²ℓ/∂z².
    pub d_zz: f64,
    /// ∂ℓ/∂θ for the family's natural parameters θ.
    pub d_prior: Vec<f64>,
    /// ∂ℓ/∂s².
    pub d_s2: f64,
    /// ∂²ℓ/∂z∂θ.
    pub d_z_prior: Vec<f64>,
    /// ∂²ℓ/∂z∂s².
    pub d_z_s2: f64,
    /// S(z) = z + s²·∂ℓ/∂z, computed in responsibility form.
    pub post_mean: f64,
    /// S′(z) = 1 + s²·∂²ℓ/∂z², computed as posterior variance over s².
    pub post_mean_deriv: f64,
}

impl Prior {
    /// Number of free parameters in the packed representation.
    ///
    /// Ash packs K-1 logits (the last is pinned to zero); point-normal packs
    /// (logit w, ln slab_var).
    pub fn free_param_len(&self) -> usize {
        match self {
            Prior::Ash(a) => a.n_components() - 1,
            Prior::PointNormal(_) => 2,
        }
    }

    /// Number of natural parameters (the length of [`NmEval::d_prior`]).
    pub fn natural_param_len(&self) -> usize {
        match self {
            Prior::Ash(a) => a.n_components(),
            Prior::PointNormal(_) => 2,
        }
    }

    /// Packs the prior parameters into an unconstrained real vector.
    ///
    /// Ash maps weights to logits relative to the last weight, which is
    /// pinned to logit zero; weights on the boundary of the simplex map to
    /// infinite logits, so exact round-trips need interior weights.
    /// Point-normal packs (logit w, ln slab_var).
    pub fn packed(&self) -> Vec<f64> {
        match self {
            Prior::Ash(a) => {
                let k = a.n_components();
                let ln_last = a.weights[k - 1].ln();
                a.weights[..k - 1].iter().map(|w| w.ln() - ln_last).collect()
            }
            Prior::PointNormal(pn) => vec![logit(pn.w), pn.slab_var.ln()],
        }
    }

    /// Rebuilds a prior of the same family (and, for ash, the same grid)
    /// from a packed vector.
    pub fn with_packed(&self, packed: &[f64]) -> Result<Prior> {
        if packed.len() != self.free_param_len() {
            return Err(Error::invalid(format!(
                "packed prior has length {}, expected {}",
                packed.len(),
                self.free_param_len()
            )));
        }
        for (i, &v) in packed.iter().enumerate() {
            if v.is_nan() {
                return Err(Error::invalid(format!("packed prior entry {i} is NaN")));
            }
        }
        match self {
            Prior::Ash(a) => {
                // Softmax over [packed, 0], max-shifted for stability.
                let k = a.n_components();
                let max = packed.iter().fold(0.0_f64, |m, &v| m.max(v));
                let mut weights = Vec::with_capacity(k);
                let mut total = 0.0;
                for &v in packed {
                    let e = (v - max).exp();
                    weights.push(e);
                    total += e;
                }
                let e_last = (-max).exp();
                weights.push(e_last);
                total += e_last;
                for w in &mut weights {
                    *w /= total;
                }
                Ok(Prior::Ash(AshPrior::new(a.grid.clone(), weights)?))
            }
            Prior::PointNormal(_) => {
                let w = expit(packed[0]);
                let slab_var = packed[1].exp();
                if !slab_var.is_finite() {
                    return Err(Error::invalid(format!(
                        "packed slab log-variance {} overflows",
                        packed[1]
                    )));
                }
                Ok(Prior::PointNormal(PointNormalPrior::new(w, slab_var)?))
            }
        }
    }

    /// Chains a gradient in natural parameters through the packing map.
    ///
    /// For ash this is the softmax Jacobian with the last logit pinned; for
    /// point-normal, the logit and log transforms.
    pub fn packed_grad_from_natural(&self, d_natural: &[f64]) -> Result<Vec<f64>> {
        if d_natural.len() != self.natural_param_len() {
            return Err(Error::invalid(format!(
                "natural gradient has length {}, expected {}",
                d_natural.len(),
                self.natural_param_len()
            )));
        }
        match self {
            Prior::Ash(a) => {
                let k = a.n_components();
                let mean: f64 = a
                    .weights
                    .iter()
                    .zip(d_natural)
                    .map(|(w, d)| w * d)
                    .sum();
                Ok((0..k - 1)
                    .map(|i| a.weights[i] * (d_natural[i] - mean))
                    .collect())
            }
            Prior::PointNormal(pn) => Ok(vec![
                pn.w * (1.0 - pn.w) * d_natural[0],
                pn.slab_var * d_natural[1],
            ]),
        }
    }

    /// Full normal-means evaluation at one observation.
    ///
    /// Errors if `s2` is not strictly positive or `z` is not finite.
    pub fn nm_eval(&self, z: f64, s2: f64) -> Result<NmEval> {
        check_obs(z, s2)?;
        match self {
            Prior::Ash(a) => {
                let mix = MixEval::new(&a.grid, &a.weights, z, s2);
                // ∂ℓ/∂w_k = φ_k / f; ∂²ℓ/∂z∂w_k = (φ_k/f)(-z α_k - ℓ′).
                let d_prior = mix.e.clone();
                let d_z_prior = mix
                    .e
                    .iter()
                    .zip(&mix.alpha)
                    .map(|(&e, &al)| e * (-z * al - mix.d_z))
                    .collect();
                Ok(mix.into_nm_eval(d_prior, d_z_prior))
            }
            Prior::PointNormal(pn) => {
                let grid = [0.0, pn.slab_var];
                let weights = [1.0 - pn.w, pn.w];
                let mix = MixEval::new(&grid, &weights, z, s2);
                let (e0, e1) = (mix.e[0], mix.e[1]);
                let (al0, al1) = (mix.alpha[0], mix.alpha[1]);
                let r1 = mix.r[1];
                let lp = mix.d_z;
                // ∂ℓ/∂w = (φ₁ - φ₀)/f; the slab-variance derivative follows
                // from ∂φ/∂τ² = φ·(z²α² - α)/2 applied to the slab only.
                let d_prior = vec![e1 - e0, 0.5 * r1 * (z * z * al1 * al1 - al1)];
                let d_z_prior = vec![
                    (z * al0 * e0 - z * al1 * e1) - lp * (e1 - e0),
                    0.5 * r1 * (z * al1 * al1 * (3.0 - z * z * al1) - lp * (z * z * al1 * al1 - al1)),
                ];
                Ok(mix.into_nm_eval(d_prior, d_z_prior))
            }
        }
    }

    /// Posterior mean S(z) under the normal-means model, in responsibility
    /// form: S(z) = z · Σ_k r_k σ_k²/(σ_k² + s²).
    ///
    /// Equals z + s²·∂ℓ/∂z; the responsibility form avoids the cancellation
    /// that the Tweedie form suffers under heavy shrinkage.
    pub fn posterior_mean(&self, z: f64, s2: f64) -> Result<f64> {
        check_obs(z, s2)?;
        Ok(NmContext::new(self, s2).posterior_mean(z))
    }

    /// Slope S′(z) of the posterior mean, computed as Var(μ | z) / s².
    ///
    /// Nonnegative by construction; exactly zero when all prior mass sits on
    /// the point mass at the origin.
    pub fn posterior_mean_deriv(&self, z: f64, s2: f64) -> Result<f64> {
        check_obs(z, s2)?;
        let mix = match self {
            Prior::Ash(a) => MixEval::new(&a.grid, &a.weights, z, s2),
            Prior::PointNormal(pn) => {
                MixEval::new(&[0.0, pn.slab_var], &[1.0 - pn.w, pn.w], z, s2)
            }
        };
        Ok(mix.post_mean_deriv)
    }

    /// Largest prior variance in the family (zero means the prior is a pure
    /// point mass and the posterior mean is identically zero).
    pub fn max_component_var(&self) -> f64 {
        match self {
            Prior::Ash(a) => {
                let mut m: f64 = 0.0;
                for (&v, &w) in a.grid.iter().zip(&a.weights) {
                    if w > 0.0 && v > m {
                        m = v;
                    }
                }
                m
            }
            Prior::PointNormal(pn) => {
                if pn.w > 0.0 {
                    pn.slab_var
                } else {
                    0.0
                }
            }
        }
    }

    /// True when the prior is a single normal with positive variance, in
    /// which case the posterior mean is linear and inversion is closed-form.
    pub fn as_single_normal_var(&self) -> Option<f64> {
        match self {
            Prior::Ash(a) if a.n_components() == 1 && a.grid[0] > 0.0 => Some(a.grid[0]),
            _ => None,
        }
    }

}

fn check_obs(z: f64, s2: f64) -> Result<()> {
    if !z.is_finite() {
        return Err(Error::invalid(format!("normal-means observation is {z}")));
    }
    if !(s2 > 0.0) || !s2.is_finite() {
        return Err(Error::invalid(format!(
            "normal-means variance is {s2}; it must be finite and > 0"
        )));
    }
    Ok(())
}

/// Precomputed per-component constants for repeated posterior-mean
/// evaluations at a fixed prior and noise level.
///
/// This is the inner loop of inversion: only multiplies, one exp per
/// component, and no allocation per query.
pub(crate) struct NmContext {
    /// ln w_k - (ln 2πτ_k²)/2; -inf for zero weights.
    t0: Vec<f64>,
    /// 1/(2τ_k²).
    half_alpha: Vec<f64>,
    /// σ_k²/τ_k², the per-component shrinkage slope.
    shrink: Vec<f64>,
}

impl NmContext {
    pub fn new(prior: &Prior, s2: f64) -> Self {
        debug_assert!(s2 > 0.0);
        match prior {
            Prior::Ash(a) => Self::from_components(&a.grid, &a.weights, s2),
            Prior::PointNormal(pn) => {
                Self::from_components(&[0.0, pn.slab_var], &[1.0 - pn.w, pn.w], s2)
            }
        }
    }

    fn from_components(grid: &[f64], weights: &[f64], s2: f64) -> Self {
        let k = grid.len();
        let mut t0 = Vec::with_capacity(k);
        let mut half_alpha = Vec::with_capacity(k);
        let mut shrink = Vec::with_capacity(k);
        for i in 0..k {
            let tau2 = grid[i] + s2;
            t0.push(weights[i].ln() - 0.5 * (LN_2PI + tau2.ln()));
            half_alpha.push(0.5 / tau2);
            shrink.push(grid[i] / tau2);
        }
        NmContext {
            t0,
            half_alpha,
            shrink,
        }
    }

    /// S(z) in responsibility form. Two passes, no allocation.
    pub fn posterior_mean(&self, z: f64) -> f64 {
        let z2 = z * z;
        let mut max = f64::NEG_INFINITY;
        for i in 0..self.t0.len() {
            let t = self.t0[i] - z2 * self.half_alpha[i];
            if t > max {
                max = t;
            }
        }
        // All weights zero is ruled out at construction; max is finite.
        let mut denom = 0.0;
        let mut num = 0.0;
        for i in 0..self.t0.len() {
            let t = self.t0[i] - z2 * self.half_alpha[i];
            if t > f64::NEG_INFINITY {
                let e = (t - max).exp();
                denom += e;
                num += e * self.shrink[i];
            }
        }
        z * (num / denom)
    }
}

/// Shared mixture evaluation: the marginal is Σ_k w_k N(z | 0, σ_k² + s²).
///
/// Field names follow the underlying calculus: `r` are responsibilities,
/// `e` are density ratios φ_k/f, `f2of` and `f3of` are f″/f and f‴/f.
struct MixEval {
    logml: f64,
    d_z: f64,
    d_zz: f64,
    d_s2: f64,
    f3of: f64,
    r: Vec<f64>,
    e: Vec<f64>,
    alpha: Vec<f64>,
    post_mean: f64,
    post_mean_deriv: f64,
}

impl MixEval {
    fn new(grid: &[f64], weights: &[f64], z: f64, s2: f64) -> Self {
        let k = grid.len();
        let mut alpha = Vec::with_capacity(k);
        let mut shrink = Vec::with_capacity(k);
        let mut log_phi = Vec::with_capacity(k);
        let mut t = Vec::with_capacity(k);
        for i in 0..k {
            let tau2 = grid[i] + s2;
            let al = 1.0 / tau2;
            alpha.push(al);
            shrink.push(grid[i] * al);
            let lp = -0.5 * (LN_2PI + tau2.ln()) - 0.5 * z * z * al;
            log_phi.push(lp);
            t.push(weights[i].ln() + lp);
        }
        let logml = log_sum_exp(&t);
        let r: Vec<f64> = t.iter().map(|&ti| stable_exp_diff(ti, logml)).collect();
        let e: Vec<f64> = log_phi
            .iter()
            .map(|&lp| stable_exp_diff(lp, logml))
            .collect();

        // First derivative and posterior mean from responsibilities.
        let mut d_z = 0.0;
        let mut post_mean_frac = 0.0;
        for i in 0..k {
            d_z += r[i] * alpha[i];
            post_mean_frac += r[i] * shrink[i];
        }
        d_z *= -z;
        let post_mean = z * post_mean_frac;

        // Posterior variance Σ r_k ((m_k - S)² + V_k) with m_k = z·shrink_k
        // and V_k = shrink_k·s²; centered so large z cannot cancel.
        let mut pv = 0.0;
        for i in 0..k {
            let dm = z * shrink[i] - post_mean;
            pv += r[i] * (dm * dm + shrink[i] * s2);
        }
        let post_mean_deriv = pv / s2;
        let d_zz = (post_mean_deriv - 1.0) / s2;

        // Heat-equation identities: ∂ℓ/∂s² = (f″/f)/2 and f‴/f from the
        // component Gaussians.
        let z2 = z * z;
        let mut f2of = 0.0;
        let mut f3of = 0.0;
        for i in 0..k {
            let a2 = alpha[i] * alpha[i];
            f2of += r[i] * (z2 * a2 - alpha[i]);
            f3of += r[i] * z * a2 * (3.0 - z2 * alpha[i]);
        }

        MixEval {
            logml,
            d_z,
            d_zz,
            d_s2: 0.5 * f2of,
            f3of,
            r,
            e,
            alpha,
            post_mean,
            post_mean_deriv,
        }
    }

    fn into_nm_eval(self, d_prior: Vec<f64>, d_z_prior: Vec<f64>) -> NmEval {
        // ∂²ℓ/∂z∂s² = (f‴/f - ℓ′ℓ″ - ℓ′³)/2.
        let d_z_s2 =
            0.5 * (self.f3of - self.d_z * self.d_zz - self.d_z * self.d_z * self.d_z);
        NmEval {
            logml: self.logml,
            d_z: self.d_z,
            d_zz: self.d_zz,
            d_prior,
            d_s2: self.d_s2,
            d_z_prior,
            d_z_s2,
            post_mean: self.post_mean,
            post_mean_deriv: self.post_mean_deriv,
        }
    }
}

/// exp(a - b) with the convention that a = b = -inf gives 0.
fn stable_exp_diff(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        0.0
    } else {
        (a - b).exp()
    }
}
