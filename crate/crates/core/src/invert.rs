//! Inversion of the posterior-mean map.
//!
//! The direct objective needs T = S⁻¹: given shrunken coefficients b̄, find
//! z with S_{g,v}(z) = b̄. S is odd and nondecreasing with 0 ≤ S(z)/z ≤ 1,
//! so the root for b̄ > 0 lies in [b̄, ∞) and can be bracketed by doubling.
//!
//! Three paths:
//!
//! * analytic, when the prior is a single normal (S is linear);
//! * [`invert_fssi`], fast separable inverse interpolation for a shared
//!   noise variance: S is sampled on a fixed grid once and the swapped pairs
//!   (S(z_i), z_i) feed a monotone cubic interpolant, so every query after
//!   the grid build costs one interpolant evaluation;
//! * [`invert_trisection`], bracketed trisection run in lockstep over all
//!   coordinates (one batched sweep of S evaluations per iteration), used
//!   whenever the noise variances differ per coordinate.
//!
//! Exact zeros pass through: T(0) = 0 with no evaluations.

use crate::error::{Error, Result};
use crate::priors::{NmContext, Prior};

/// Width stop for trisection, relative to max(1, |b̄|).
const WIDTH_FACTOR: f64 = 1e-12;

/// Number of points in each FSSI grid segment (linear on [0, 1], geometric
/// above), giving 2000 knots total.
const FSSI_SEGMENT_POINTS: usize = 1000;

/// Relative spread below which per-coordinate variances count as constant.
const HOMOSCEDASTIC_REL_SPREAD: f64 = 1e-12;

/// How the inverse is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum InversionMethod {
    /// Analytic for single-normal priors, FSSI for a shared noise variance,
    /// trisection otherwise.
    #[default]
    Auto,
    /// Force bracketed trisection.
    Trisection,
    /// Force grid interpolation; requires a shared noise variance.
    Fssi,
}

/// Tolerances and limits for the inversion routines.
#[derive(Clone, Debug)]
pub struct InversionOptions {
    /// Residual tolerance on |S(z) - b̄|.
    pub tol: f64,
    /// Maximum bracket doublings (trisection) or grid extensions (FSSI).
    pub max_expand: usize,
    /// Maximum trisection iterations per coordinate.
    pub max_iters: usize,
    pub method: InversionMethod,
}

impl Default for InversionOptions {
    fn default() -> Self {
        InversionOptions {
            tol: 1e-8,
            max_expand: 60,
            max_iters: 200,
            method: InversionMethod::Auto,
        }
    }
}

fn validate_inputs(b: &[f64], v2: &[f64]) -> Result<()> {
    if b.len() != v2.len() {
        return Err(Error::invalid(format!(
            "inversion got {} coefficients but {} variances",
            b.len(),
            v2.len()
        )));
    }
    for (j, &bj) in b.iter().enumerate() {
        if !bj.is_finite() {
            return Err(Error::invalid(format!("coefficient {j} is {bj}")));
        }
    }
    for (j, &vj) in v2.iter().enumerate() {
        if !(vj > 0.0) || !vj.is_finite() {
            return Err(Error::invalid(format!(
                "noise variance {j} is {vj}; it must be finite and > 0"
            )));
        }
    }
    Ok(())
}

fn v2_is_constant(v2: &[f64]) -> bool {
    let first = v2[0];
    v2.iter()
        .all(|&v| (v - first).abs() <= HOMOSCEDASTIC_REL_SPREAD * first)
}

/// Inverts S coordinate-wise, choosing the path per [`InversionMethod`].
pub fn invert(b: &[f64], g: &Prior, v2: &[f64], opts: &InversionOptions) -> Result<Vec<f64>> {
    if b.is_empty() {
        return Ok(Vec::new());
    }
    validate_inputs(b, v2)?;
    if let Some(var) = g.as_single_normal_var() {
        // S(z) = z·σ²/(σ² + v²) is linear; invert exactly.
        return Ok(b
            .iter()
            .zip(v2)
            .map(|(&bj, &vj)| bj * (var + vj) / var)
            .collect());
    }
    match opts.method {
        InversionMethod::Trisection => invert_trisection_unchecked(b, g, v2, opts),
        InversionMethod::Fssi => {
            if !v2_is_constant(v2) {
                return Err(Error::invalid(
                    "FSSI inversion requires a constant noise variance across coordinates",
                ));
            }
            invert_fssi(b, g, v2[0], opts)
        }
        InversionMethod::Auto => {
            if v2_is_constant(v2) {
                invert_fssi(b, g, v2[0], opts)
            } else {
                invert_trisection_unchecked(b, g, v2, opts)
            }
        }
    }
}

/// Bracketed trisection over all coordinates in lockstep.
///
/// Each iteration evaluates S at the two interior probes of every active
/// bracket in one batched pass and keeps the third of the interval that
/// still straddles the target. Coordinates freeze as soon as the residual
/// drops below `opts.tol` or the bracket width falls below
/// 1e-12·max(1, |b̄|).
pub fn invert_trisection(
    b: &[f64],
    g: &Prior,
    v2: &[f64],
    opts: &InversionOptions,
) -> Result<Vec<f64>> {
    if b.is_empty() {
        return Ok(Vec::new());
    }
    validate_inputs(b, v2)?;
    invert_trisection_unchecked(b, g, v2, opts)
}

fn invert_trisection_unchecked(
    b: &[f64],
    g: &Prior,
    v2: &[f64],
    opts: &InversionOptions,
) -> Result<Vec<f64>> {
    let p = b.len();
    let mut z = vec![0.0; p];

    // Active set: coordinates with nonzero targets, tracked in parallel
    // arrays and compacted as they converge.
    struct Slot {
        idx: usize,
        target: f64,
        sign: f64,
        lo: f64,
        hi: f64,
        ctx: NmContext,
    }
    let mut slots: Vec<Slot> = Vec::new();
    for j in 0..p {
        if b[j] == 0.0 {
            continue;
        }
        slots.push(Slot {
            idx: j,
            target: b[j].abs(),
            sign: b[j].signum(),
            lo: b[j].abs(),
            hi: 2.0 * b[j].abs() + 1.0,
            ctx: NmContext::new(g, v2[j]),
        });
    }

    // Bracket expansion, lockstep: S(hi) must reach the target. A failed
    // probe still tightens the bracket from below.
    let mut unbracketed: Vec<usize> = (0..slots.len()).collect();
    let mut expansions = 0;
    while !unbracketed.is_empty() {
        unbracketed.retain(|&i| {
            let s = &mut slots[i];
            if s.ctx.posterior_mean(s.hi) >= s.target {
                false
            } else {
                s.lo = s.hi;
                s.hi *= 2.0;
                true
            }
        });
        if unbracketed.is_empty() {
            break;
        }
        expansions += 1;
        if expansions > opts.max_expand {
            let s = &slots[unbracketed[0]];
            return Err(Error::BracketExpansion {
                coord: s.idx,
                target: s.sign * s.target,
                upper: s.hi,
                reached: s.ctx.posterior_mean(s.hi) * s.sign,
                expansions: opts.max_expand,
            });
        }
    }

    let mut iters = 0;
    while !slots.is_empty() {
        iters += 1;
        if iters > opts.max_iters {
            let s = &slots[0];
            let mid = 0.5 * (s.lo + s.hi);
            return Err(Error::InversionStalled {
                coord: s.idx,
                residual: (s.ctx.posterior_mean(mid) - s.target).abs(),
                iters: opts.max_iters,
            });
        }
        let mut i = 0;
        while i < slots.len() {
            let s = &mut slots[i];
            if s.lo > s.hi {
                return Err(Error::Internal(format!(
                    "non-monotone posterior mean: bracket misordered for coordinate {} \
                     (lo = {:.6e}, hi = {:.6e})",
                    s.idx, s.lo, s.hi
                )));
            }
            let width = s.hi - s.lo;
            let m1 = s.lo + width / 3.0;
            let m2 = s.lo + 2.0 * width / 3.0;
            let s1 = s.ctx.posterior_mean(m1);
            let s2 = s.ctx.posterior_mean(m2);

            let mut done = None;
            if (s1 - s.target).abs() <= opts.tol {
                done = Some(m1);
            } else if (s2 - s.target).abs() <= opts.tol {
                done = Some(m2);
            } else if s1 >= s.target {
                s.hi = m1;
            } else if s2 >= s.target {
                s.lo = m1;
                s.hi = m2;
            } else {
                s.lo = m2;
            }
            if done.is_none() && s.hi - s.lo <= WIDTH_FACTOR * s.target.max(1.0) {
                done = Some(0.5 * (s.lo + s.hi));
            }
            match done {
                Some(root) => {
                    z[s.idx] = s.sign * root;
                    slots.swap_remove(i);
                }
                None => i += 1,
            }
        }
    }
    Ok(z)
}

/// Fast separable inverse via grid sampling and monotone interpolation.
///
/// Requires one shared noise variance. S is evaluated on a 2000-point grid
/// (linear on [0, 1], geometric up to an upper bound derived from the
/// largest prior variance), the pairs are swapped, and a Fritsch-Carlson
/// monotone cubic interpolates T. Oddness restores negative queries. If a
/// target exceeds the sampled range the grid is extended up to
/// `opts.max_expand` times before reporting a range error.
pub fn invert_fssi(b: &[f64], g: &Prior, v2: f64, opts: &InversionOptions) -> Result<Vec<f64>> {
    if b.is_empty() {
        return Ok(Vec::new());
    }
    if !(v2 > 0.0) || !v2.is_finite() {
        return Err(Error::invalid(format!(
            "noise variance is {v2}; it must be finite and > 0"
        )));
    }
    for (j, &bj) in b.iter().enumerate() {
        if !bj.is_finite() {
            return Err(Error::invalid(format!("coefficient {j} is {bj}")));
        }
    }
    if let Some(var) = g.as_single_normal_var() {
        return Ok(b.iter().map(|&bj| bj * (var + v2) / var).collect());
    }

    let mut tmax = 0.0_f64;
    let mut argmax = 0;
    for (j, &bj) in b.iter().enumerate() {
        if bj.abs() > tmax {
            tmax = bj.abs();
            argmax = j;
        }
    }
    if tmax == 0.0 {
        return Ok(vec![0.0; b.len()]);
    }

    let var_max = g.max_component_var();
    if var_max == 0.0 {
        // All prior mass on the point mass: S ≡ 0 and nothing is invertible.
        return Err(Error::OutOfRange {
            coord: argmax,
            target: b[argmax],
            max_reachable: 0.0,
            expansions: 0,
        });
    }

    let ctx = NmContext::new(g, v2);
    // T(b̄) ≈ b̄·(σ_max² + v²)/σ_max² for large b̄; doubling that leaves
    // slack for the crossover region where mass shifts between components.
    let mut z_hi = (2.0 * tmax * (var_max + v2) / var_max).max(10.0);
    let mut expansions = 0;
    let (grid, s_vals) = loop {
        let grid = fssi_grid(z_hi);
        let mut s_vals: Vec<f64> = grid.iter().map(|&zi| ctx.posterior_mean(zi)).collect();
        // Clamp tiny floating-point dips; S is mathematically nondecreasing.
        for i in 1..s_vals.len() {
            if s_vals[i] < s_vals[i - 1] {
                s_vals[i] = s_vals[i - 1];
            }
        }
        if *s_vals.last().unwrap() >= tmax {
            break (grid, s_vals);
        }
        expansions += 1;
        if expansions > opts.max_expand {
            return Err(Error::OutOfRange {
                coord: argmax,
                target: b[argmax],
                max_reachable: *s_vals.last().unwrap(),
                expansions: opts.max_expand,
            });
        }
        z_hi *= 2.0;
    };

    // Swap the pairs: knots are (S(z_i), z_i). Ties collapse to their first
    // occurrence so the interpolant sees strictly increasing abscissae.
    // T'(S(z)) = 1/S'(z) supplies exact knot slopes; flat stretches of S
    // give unbounded ones, which the interpolant clamps.
    let mut xs = Vec::with_capacity(grid.len());
    let mut ys = Vec::with_capacity(grid.len());
    let mut slopes = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        if i == 0 || s_vals[i] > *xs.last().unwrap() {
            let sp = g.posterior_mean_deriv(grid[i], v2)?;
            xs.push(s_vals[i]);
            ys.push(grid[i]);
            slopes.push(if sp > 0.0 { 1.0 / sp } else { f64::INFINITY });
        }
    }
    let interp = MonotoneCubic::with_slopes(xs, ys, &slopes)?;

    Ok(b.iter()
        .map(|&bj| {
            if bj == 0.0 {
                0.0
            } else {
                bj.signum() * interp.eval(bj.abs())
            }
        })
        .collect())
}

/// Grid for FSSI: linear spacing on [0, 1], geometric from 1 to `z_hi`.
fn fssi_grid(z_hi: f64) -> Vec<f64> {
    debug_assert!(z_hi > 1.0);
    let m = FSSI_SEGMENT_POINTS;
    let mut grid = Vec::with_capacity(2 * m + 1);
    for i in 0..=m {
        grid.push(i as f64 / m as f64);
    }
    let ln_hi = z_hi.ln();
    for i in 1..=m {
        grid.push((ln_hi * i as f64 / m as f64).exp());
    }
    grid
}

/// Monotone piecewise-cubic Hermite interpolant over strictly increasing
/// data.
///
/// Knot slopes are supplied by the caller and clamped into the
/// Fritsch-Carlson region [0, 3·min(adjacent secants)], which is sufficient
/// for the curve to stay monotone between knots no matter how steep the
/// supplied values are.
struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl MonotoneCubic {
    fn with_slopes(x: Vec<f64>, y: Vec<f64>, slopes: &[f64]) -> Result<Self> {
        let n = x.len();
        if n < 2 {
            return Err(Error::Internal(format!(
                "monotone interpolant needs at least 2 knots, got {n}"
            )));
        }
        if slopes.len() != n {
            return Err(Error::Internal(format!(
                "{} slopes supplied for {n} knots",
                slopes.len()
            )));
        }
        for i in 1..n {
            if !(x[i] > x[i - 1]) {
                return Err(Error::Internal(format!(
                    "interpolation knots not strictly increasing at index {i}"
                )));
            }
        }
        let secant = |i: usize| (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
        let mut d = Vec::with_capacity(n);
        for i in 0..n {
            let left = if i > 0 { secant(i - 1) } else { f64::INFINITY };
            let right = if i + 1 < n { secant(i) } else { f64::INFINITY };
            let cap = 3.0 * left.min(right);
            d.push(slopes[i].clamp(0.0, cap));
        }
        Ok(MonotoneCubic { x, y, d })
    }

    fn eval(&self, q: f64) -> f64 {
        let n = self.x.len();
        // partition_point returns the first knot > q; the segment starts one
        // before it. Queries are clamped to the knot range by construction.
        let hi = self.x.partition_point(|&xi| xi <= q).min(n - 1).max(1);
        let lo = hi - 1;
        let h = self.x[hi] - self.x[lo];
        let t = ((q - self.x[lo]) / h).clamp(0.0, 1.0);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.y[lo] + h10 * h * self.d[lo] + h01 * self.y[hi] + h11 * h * self.d[hi]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::AshPrior;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ash(grid: &[f64], weights: &[f64]) -> Prior {
        Prior::Ash(AshPrior::new(grid.to_vec(), weights.to_vec()).unwrap())
    }

    fn roundtrip_residual(g: &Prior, b: f64, v2: f64, z: f64) -> f64 {
        (g.posterior_mean(z, v2).unwrap() - b).abs()
    }

    #[test]
    fn single_normal_inverts_exactly() {
        // σ² = v² = 1 doubles: T(b) = b(σ² + v²)/σ² = 2b.
        let g = ash(&[1.0], &[1.0]);
        let b = [-3.0, -0.5, 0.0, 0.25, 7.0];
        let v2 = [1.0; 5];
        let opts = InversionOptions::default();
        let auto = invert(&b, &g, &v2, &opts).unwrap();
        for (bj, zj) in b.iter().zip(&auto) {
            assert_abs_diff_eq!(*zj, 2.0 * bj, epsilon = 1e-14);
        }
        let tri = invert_trisection(&b, &g, &v2, &opts).unwrap();
        for (bj, zj) in b.iter().zip(&tri) {
            assert_abs_diff_eq!(*zj, 2.0 * bj, epsilon = 1e-7);
        }
    }

    #[test]
    fn zero_passes_through_exactly() {
        let g = ash(&[0.0, 0.5, 2.0], &[0.4, 0.4, 0.2]);
        let opts = InversionOptions::default();
        let z = invert(&[0.0, 0.0], &g, &[0.7, 1.3], &opts).unwrap();
        assert_eq!(z, vec![0.0, 0.0]);
        let z = invert_fssi(&[0.0], &g, 1.0, &opts).unwrap();
        assert_eq!(z, vec![0.0]);
    }

    #[test]
    fn trisection_roundtrips_heteroscedastic_targets() {
        let g = ash(&[0.0, 0.1, 1.0, 4.0], &[0.4, 0.3, 0.2, 0.1]);
        let opts = InversionOptions::default();
        let b: Vec<f64> = (0..40).map(|i| (i as f64 - 20.0) * 0.37).collect();
        let v2: Vec<f64> = (0..40).map(|i| 0.2 + 0.05 * i as f64).collect();
        let z = invert_trisection(&b, &g, &v2, &opts).unwrap();
        for j in 0..b.len() {
            let res = roundtrip_residual(&g, b[j], v2[j], z[j]);
            assert!(
                res <= opts.tol.max(1e-8) * b[j].abs().max(1.0),
                "coordinate {j}: residual {res:.3e}"
            );
        }
    }

    #[test]
    fn fssi_roundtrips_shared_variance_targets() {
        let g = ash(&[0.0, 0.2, 1.5], &[0.5, 0.3, 0.2]);
        let opts = InversionOptions::default();
        let b: Vec<f64> = (0..200).map(|i| (i as f64 - 100.0) * 0.11).collect();
        let z = invert_fssi(&b, &g, 0.8, &opts).unwrap();
        for j in 0..b.len() {
            let res = roundtrip_residual(&g, b[j], 0.8, z[j]);
            assert!(
                res <= 1e-6 * b[j].abs().max(1.0),
                "coordinate {j} (b = {}): residual {res:.3e}",
                b[j]
            );
        }
    }

    #[test]
    fn fssi_handles_near_spike_priors() {
        let g = ash(&[0.0, 1.0], &[0.999, 0.001]);
        let opts = InversionOptions::default();
        let b: Vec<f64> = (1..100).map(|i| i as f64 * 0.05).collect();
        let z = invert_fssi(&b, &g, 1.0, &opts).unwrap();
        for j in 0..b.len() {
            let res = roundtrip_residual(&g, b[j], 1.0, z[j]);
            assert!(
                res <= 1e-6 * b[j].abs().max(1.0),
                "coordinate {j} (b = {}): residual {res:.3e}",
                b[j]
            );
        }
    }

    #[test]
    fn dispatcher_picks_fssi_for_constant_variance_and_agrees_with_trisection() {
        let g = ash(&[0.0, 0.3, 2.0], &[0.5, 0.3, 0.2]);
        let opts = InversionOptions::default();
        let b = [-4.2, -1.0, 0.3, 2.2, 9.0];
        let v2 = [0.9; 5];
        let auto = invert(&b, &g, &v2, &opts).unwrap();
        let tri = invert_trisection(&b, &g, &v2, &opts).unwrap();
        for j in 0..b.len() {
            // Both must satisfy the same residual bound, so they agree to
            // within the tolerance propagated through the local slope.
            assert!(roundtrip_residual(&g, b[j], v2[j], auto[j]) <= 1e-6 * b[j].abs().max(1.0));
            assert!(roundtrip_residual(&g, b[j], v2[j], tri[j]) <= 1e-7 * b[j].abs().max(1.0));
        }
    }

    #[test]
    fn forced_fssi_rejects_heteroscedastic_variances() {
        let g = ash(&[0.0, 1.0], &[0.5, 0.5]);
        let opts = InversionOptions {
            method: InversionMethod::Fssi,
            ..Default::default()
        };
        let err = invert(&[1.0, 2.0], &g, &[0.5, 0.9], &opts).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn pure_spike_prior_cannot_be_inverted() {
        let g = ash(&[0.0], &[1.0]);
        let opts = InversionOptions::default();
        let err = invert_trisection(&[0.5], &g, &[1.0], &opts).unwrap_err();
        assert!(matches!(err, Error::BracketExpansion { coord: 0, .. }), "{err:?}");
        let err = invert_fssi(&[0.5], &g, 1.0, &opts).unwrap_err();
        assert!(matches!(err, Error::OutOfRange { coord: 0, .. }), "{err:?}");
    }

    #[test]
    fn length_mismatch_is_a_domain_error() {
        let g = ash(&[1.0], &[1.0]);
        let opts = InversionOptions::default();
        assert!(invert(&[1.0, 2.0], &g, &[1.0], &opts).is_err());
        assert!(invert(&[1.0], &g, &[-1.0], &opts).is_err());
    }

    #[test]
    fn monotone_cubic_reproduces_line_and_preserves_monotonicity() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|&v| 3.0 * v - 1.0).collect();
        let slopes = vec![3.0; x.len()];
        let c = MonotoneCubic::with_slopes(x, y, &slopes).unwrap();
        for q in [0.0, 0.33, 2.51, 4.9] {
            assert_abs_diff_eq!(c.eval(q), 3.0 * q - 1.0, epsilon = 1e-12);
        }

        // Flat-then-steep data with wildly overstated slopes must still
        // come out nondecreasing between knots.
        let x = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let y = vec![0.0, 0.01, 0.02, 5.0, 10.0];
        let slopes = vec![1e9, 0.0, 1e9, 1e9, 1e9];
        let c = MonotoneCubic::with_slopes(x, y, &slopes).unwrap();
        let mut prev = c.eval(0.0);
        for i in 1..=400 {
            let q = i as f64 * 0.01;
            let v = c.eval(q);
            assert!(v >= prev - 1e-12, "dip at {q}: {v} < {prev}");
            prev = v;
        }
    }

    #[test]
    fn monotone_cubic_with_exact_slopes_is_high_order() {
        // Knots from a smooth monotone function; exact derivative data
        // should reproduce it far better than secant-based slopes could.
        let f = |v: f64| v + v.tanh();
        let fp = |v: f64| 1.0 + 1.0 / v.cosh().powi(2);
        let x: Vec<f64> = (0..40).map(|i| -2.0 + i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|&v| f(v)).collect();
        let slopes: Vec<f64> = x.iter().map(|&v| fp(v)).collect();
        let c = MonotoneCubic::with_slopes(x, y, &slopes).unwrap();
        for i in 0..390 {
            let q = -2.0 + i as f64 * 0.01;
            assert_abs_diff_eq!(c.eval(q), f(q), epsilon = 2e-6);
        }
    }

    proptest! {
        #[test]
        fn trisection_roundtrip_random_priors(
            logits in proptest::collection::vec(-4.0_f64..4.0, 4),
            b in proptest::collection::vec(-15.0_f64..15.0, 1..12),
            v2_base in 0.2_f64..4.0,
        ) {
            let template = Prior::Ash(AshPrior::default_with_components(5).unwrap());
            let g = template.with_packed(&logits).unwrap();
            let v2: Vec<f64> = (0..b.len()).map(|i| v2_base * (1.0 + 0.1 * i as f64)).collect();
            let opts = InversionOptions::default();
            let z = invert_trisection(&b, &g, &v2, &opts).unwrap();
            for j in 0..b.len() {
                let res = roundtrip_residual(&g, b[j], v2[j], z[j]);
                prop_assert!(res <= 1e-7 * b[j].abs().max(1.0), "residual {res}");
                // Oddness: inverting the negated target lands on -z.
                let zn = invert_trisection(&[-b[j]], &g, &[v2[j]], &opts).unwrap();
                prop_assert!((zn[0] + z[j]).abs() <= 1e-9 * (1.0 + z[j].abs()));
            }
        }

        #[test]
        fn fssi_roundtrip_random_priors(
            logits in proptest::collection::vec(-4.0_f64..4.0, 4),
            b in proptest::collection::vec(-15.0_f64..15.0, 1..12),
            v2 in 0.2_f64..4.0,
        ) {
            let template = Prior::Ash(AshPrior::default_with_components(5).unwrap());
            let g = template.with_packed(&logits).unwrap();
            let opts = InversionOptions::default();
            let z = invert_fssi(&b, &g, v2, &opts).unwrap();
            for j in 0..b.len() {
                let res = roundtrip_residual(&g, b[j], v2, z[j]);
                prop_assert!(res <= 1e-6 * b[j].abs().max(1.0), "residual {res}");
            }
        }
    }
}
