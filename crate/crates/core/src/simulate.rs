//! Seeded generators for the benchmark designs and the comparison metrics.
//!
//! Every generator is a pure function of its spec, so a (spec, seed) pair
//! reproduces a dataset bit for bit. Noise levels for regression are set
//! from the realized signal variance and the target proportion of variance
//! explained, which makes the achieved PVE exact by construction rather
//! than approximate.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Within-block correlation of the block design.
const BLOCK_RHO: f64 = 0.95;
const BLOCK_COUNT: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    /// Independent standard-normal entries.
    Iid,
    /// Three column blocks with within-block correlation 0.95.
    Block,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinregSpec {
    pub n: usize,
    pub p: usize,
    /// Number of causal predictors.
    pub s: usize,
    /// Target proportion of variance explained, in (0, 1).
    pub pve: f64,
    pub design: DesignKind,
    /// Minimum block size for the block design; p/5 when unset.
    pub min_block: Option<usize>,
    pub seed: u64,
}

impl LinregSpec {
    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid(format!(
                "n = {} but the noise calibration needs at least 2 samples",
                self.n
            )));
        }
        if self.p == 0 {
            return Err(Error::invalid("p must be positive"));
        }
        if self.s == 0 || self.s > self.p {
            return Err(Error::invalid(format!(
                "s = {} must satisfy 1 <= s <= p = {}",
                self.s, self.p
            )));
        }
        if !(self.pve > 0.0 && self.pve < 1.0) {
            return Err(Error::invalid(format!(
                "pve = {} must lie strictly between 0 and 1",
                self.pve
            )));
        }
        if self.design == DesignKind::Block {
            let m = self.min_block_size();
            if m == 0 {
                return Err(Error::invalid("minimum block size must be positive"));
            }
            if self.p < BLOCK_COUNT * m {
                return Err(Error::invalid(format!(
                    "block design needs p >= {} for {} blocks of at least {} columns, got p = {}",
                    BLOCK_COUNT * m,
                    BLOCK_COUNT,
                    m,
                    self.p
                )));
            }
        }
        Ok(())
    }

    fn min_block_size(&self) -> usize {
        self.min_block.unwrap_or((self.p / 5).max(1))
    }
}

pub struct LinregData {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub b_true: Array1<f64>,
    pub sigma2_true: f64,
    /// Ascending indices of the causal predictors.
    pub causal: Vec<usize>,
}

/// Noise variance that makes Var(Xb)/(Var(Xb) + sigma2) equal the target.
pub fn noise_variance_for_pve(var_xb: f64, pve: f64) -> f64 {
    var_xb * (1.0 - pve) / pve
}

fn sample_variance(v: &Array1<f64>) -> f64 {
    let n = v.len() as f64;
    let mean = v.sum() / n;
    v.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Three block sizes, each at least m and summing to p, from two uniform
/// cuts of the slack p - 3m.
fn block_sizes(rng: &mut ChaCha20Rng, p: usize, m: usize) -> [usize; BLOCK_COUNT] {
    let slack = p - BLOCK_COUNT * m;
    let mut a = rng.random_range(0..=slack);
    let mut b = rng.random_range(0..=slack);
    if a > b {
        std::mem::swap(&mut a, &mut b);
    }
    [m + a, m + (b - a), m + (slack - b)]
}

pub fn sim_linreg(spec: &LinregSpec) -> Result<LinregData> {
    spec.validate()?;
    let (n, p) = (spec.n, spec.p);
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let std_normal = Normal::new(0.0, 1.0).unwrap();

    let x = match spec.design {
        DesignKind::Iid => {
            Array2::from_shape_fn((n, p), |_| std_normal.sample(&mut rng))
        }
        DesignKind::Block => {
            let sizes = block_sizes(&mut rng, p, spec.min_block_size());
            let shared = BLOCK_RHO.sqrt();
            let unique = (1.0 - BLOCK_RHO).sqrt();
            let mut flat = vec![0.0_f64; n * p];
            for i in 0..n {
                let row = &mut flat[i * p..(i + 1) * p];
                let mut j = 0;
                for &size in &sizes {
                    let u = std_normal.sample(&mut rng);
                    for slot in &mut row[j..j + size] {
                        *slot = shared * u + unique * std_normal.sample(&mut rng);
                    }
                    j += size;
                }
            }
            Array2::from_shape_vec((n, p), flat).expect("row-major fill matches shape")
        }
    };

    let mut causal: Vec<usize> = rand::seq::index::sample(&mut rng, p, spec.s).into_vec();
    causal.sort_unstable();
    let mut b_true = Array1::zeros(p);
    for &j in &causal {
        b_true[j] = std_normal.sample(&mut rng);
    }

    let xb = x.dot(&b_true);
    let var_xb = sample_variance(&xb);
    if !(var_xb > 0.0) {
        return Err(Error::invalid(
            "generated signal Xb has zero variance, cannot calibrate noise",
        ));
    }
    let sigma2_true = noise_variance_for_pve(var_xb, spec.pve);
    let sigma = sigma2_true.sqrt();
    let y = Array1::from_shape_fn(n, |i| xb[i] + sigma * std_normal.sample(&mut rng));

    Ok(LinregData {
        x,
        y,
        b_true,
        sigma2_true,
        causal,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrendfilterSpec {
    pub n: usize,
    pub n_changepoints: usize,
    /// Noise standard deviation.
    pub sigma: f64,
    pub seed: u64,
}

pub struct TrendfilterData {
    pub y: Array1<f64>,
    pub mu_true: Array1<f64>,
    /// Ascending positions in 1..n where the level jumps.
    pub changepoints: Vec<usize>,
    /// Jump sizes aligned with `changepoints`.
    pub jumps: Vec<f64>,
}

pub fn sim_trendfilter(spec: &TrendfilterSpec) -> Result<TrendfilterData> {
    if spec.n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    if spec.n_changepoints >= spec.n {
        return Err(Error::invalid(format!(
            "{} changepoints do not fit a series of length {}",
            spec.n_changepoints, spec.n
        )));
    }
    if !(spec.sigma >= 0.0) || !spec.sigma.is_finite() {
        return Err(Error::invalid(format!(
            "sigma = {} must be finite and nonnegative",
            spec.sigma
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let std_normal = Normal::new(0.0, 1.0).unwrap();

    // Positions 1..n are eligible; position 0 is the base level.
    let mut changepoints: Vec<usize> =
        rand::seq::index::sample(&mut rng, spec.n - 1, spec.n_changepoints)
            .into_iter()
            .map(|i| i + 1)
            .collect();
    changepoints.sort_unstable();
    let jumps: Vec<f64> = changepoints
        .iter()
        .map(|_| std_normal.sample(&mut rng))
        .collect();

    let mut mu_true = Array1::zeros(spec.n);
    let mut level = 0.0_f64;
    let mut next = 0;
    for (i, slot) in mu_true.iter_mut().enumerate() {
        if next < changepoints.len() && changepoints[next] == i {
            level += jumps[next];
            next += 1;
        }
        *slot = level;
    }

    let y = Array1::from_shape_fn(spec.n, |i| {
        mu_true[i] + spec.sigma * std_normal.sample(&mut rng)
    });

    Ok(TrendfilterData {
        y,
        mu_true,
        changepoints,
        jumps,
    })
}

/// Root mean squared error scaled by 1/sqrt(n).
pub fn rmse(reference: &[f64], prediction: &[f64]) -> Result<f64> {
    if reference.len() != prediction.len() || reference.is_empty() {
        return Err(Error::invalid(format!(
            "rmse needs equal nonempty lengths, got {} and {}",
            reference.len(),
            prediction.len()
        )));
    }
    let ss: f64 = reference
        .iter()
        .zip(prediction)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((ss / reference.len() as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonMetrics {
    pub rmse: f64,
    /// 100·(rmse − rmse_ref)/rmse_ref; absent when the reference error is
    /// zero and the method error is not.
    pub delta_rmse_pct: Option<f64>,
    pub delta_elbo: f64,
}

pub fn comparison_metrics(
    reference: &[f64],
    method_pred: &[f64],
    ref_pred: &[f64],
    elbo_method: f64,
    elbo_ref: f64,
) -> Result<ComparisonMetrics> {
    let rmse_method = rmse(reference, method_pred)?;
    let rmse_ref = rmse(reference, ref_pred)?;
    let delta_rmse_pct = if rmse_ref == 0.0 {
        if rmse_method == 0.0 {
            Some(0.0)
        } else {
            None
        }
    } else {
        Some(100.0 * (rmse_method - rmse_ref) / rmse_ref)
    };
    Ok(ComparisonMetrics {
        rmse: rmse_method,
        delta_rmse_pct,
        delta_elbo: elbo_method - elbo_ref,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::{tf_operator, LinearOperator};
    use approx::assert_abs_diff_eq;

    fn iid_spec(seed: u64) -> LinregSpec {
        LinregSpec {
            n: 60,
            p: 40,
            s: 5,
            pve: 0.6,
            design: DesignKind::Iid,
            min_block: None,
            seed,
        }
    }

    #[test]
    fn noise_formula_hits_stated_point() {
        assert_eq!(noise_variance_for_pve(2.0, 0.5), 2.0);
    }

    #[test]
    fn achieved_pve_is_exact() {
        for seed in [0_u64, 3, 11] {
            let data = sim_linreg(&iid_spec(seed)).unwrap();
            let var_xb = sample_variance(&data.x.dot(&data.b_true));
            let achieved = var_xb / (var_xb + data.sigma2_true);
            assert_abs_diff_eq!(achieved, 0.6, epsilon = 1e-10);
        }
    }

    #[test]
    fn regeneration_is_bit_identical() {
        let spec = LinregSpec {
            n: 500,
            p: 10_000,
            s: 10,
            pve: 0.6,
            design: DesignKind::Iid,
            min_block: None,
            seed: 7,
        };
        let a = sim_linreg(&spec).unwrap();
        let b = sim_linreg(&spec).unwrap();
        assert!(a
            .x
            .iter()
            .zip(b.x.iter())
            .all(|(u, v)| u.to_bits() == v.to_bits()));
        assert!(a
            .y
            .iter()
            .zip(b.y.iter())
            .all(|(u, v)| u.to_bits() == v.to_bits()));
        assert_eq!(a.causal, b.causal);
        assert_eq!(a.sigma2_true.to_bits(), b.sigma2_true.to_bits());
    }

    #[test]
    fn block_design_hits_target_correlation() {
        let spec = LinregSpec {
            n: 500,
            p: 30,
            s: 3,
            pve: 0.5,
            design: DesignKind::Block,
            min_block: Some(6),
            seed: 21,
        };
        let data = sim_linreg(&spec).unwrap();
        // Columns 0 and 1 always share the first block because every block
        // holds at least 6 columns.
        let mut within = Vec::new();
        for j in 0..5_usize {
            for k in (j + 1)..6 {
                within.push(column_corr(&data.x, j, k));
            }
        }
        let mean_within = within.iter().sum::<f64>() / within.len() as f64;
        assert!(
            (mean_within - BLOCK_RHO).abs() <= 0.02,
            "within-block correlation {mean_within}"
        );
        // Columns 0 and 29 always sit in different blocks.
        let between = column_corr(&data.x, 0, 29).abs();
        assert!(between <= 0.15, "between-block correlation {between}");
    }

    fn column_corr(x: &Array2<f64>, j: usize, k: usize) -> f64 {
        let a = x.column(j);
        let b = x.column(k);
        let n = a.len() as f64;
        let (ma, mb) = (a.sum() / n, b.sum() / n);
        let (mut num, mut va, mut vb) = (0.0, 0.0, 0.0);
        for (u, v) in a.iter().zip(b.iter()) {
            num += (u - ma) * (v - mb);
            va += (u - ma) * (u - ma);
            vb += (v - mb) * (v - mb);
        }
        num / (va * vb).sqrt()
    }

    #[test]
    fn block_sizes_respect_minimum_and_sum() {
        for seed in 0..50_u64 {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let sizes = block_sizes(&mut rng, 103, 11);
            assert_eq!(sizes.iter().sum::<usize>(), 103);
            assert!(sizes.iter().all(|&s| s >= 11), "{sizes:?}");
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = iid_spec(0);
        spec.pve = 1.0;
        assert!(sim_linreg(&spec).is_err());
        let mut spec = iid_spec(0);
        spec.s = 0;
        assert!(sim_linreg(&spec).is_err());
        let mut spec = iid_spec(0);
        spec.s = spec.p + 1;
        assert!(sim_linreg(&spec).is_err());
        let mut spec = iid_spec(0);
        spec.design = DesignKind::Block;
        spec.p = 10;
        spec.min_block = Some(4);
        assert!(sim_linreg(&spec).is_err());
        assert!(sim_trendfilter(&TrendfilterSpec {
            n: 5,
            n_changepoints: 5,
            sigma: 1.0,
            seed: 0,
        })
        .is_err());
    }

    #[test]
    fn trend_matches_cumulative_sum_operator() {
        let spec = TrendfilterSpec {
            n: 128,
            n_changepoints: 9,
            sigma: 0.4,
            seed: 5,
        };
        let data = sim_trendfilter(&spec).unwrap();
        let mut embedded = Array1::zeros(spec.n);
        for (&cp, &jump) in data.changepoints.iter().zip(&data.jumps) {
            embedded[cp] = jump;
        }
        let op = tf_operator(spec.n, 0, false).unwrap();
        let mu = op.matvec(embedded.view());
        assert!(mu
            .iter()
            .zip(data.mu_true.iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn zero_changepoints_give_constant_level() {
        let data = sim_trendfilter(&TrendfilterSpec {
            n: 32,
            n_changepoints: 0,
            sigma: 1.0,
            seed: 1,
        })
        .unwrap();
        assert!(data.mu_true.iter().all(|&m| m == 0.0));
        assert!(data.changepoints.is_empty());
    }

    #[test]
    fn trendfilter_rerun_is_bit_identical() {
        let spec = TrendfilterSpec {
            n: 256,
            n_changepoints: 10,
            sigma: 0.2,
            seed: 9,
        };
        let a = sim_trendfilter(&spec).unwrap();
        let b = sim_trendfilter(&spec).unwrap();
        assert_eq!(a.changepoints, b.changepoints);
        assert!(a
            .y
            .iter()
            .zip(b.y.iter())
            .all(|(u, v)| u.to_bits() == v.to_bits()));
    }

    #[test]
    fn metric_formulas_match_hand_values() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!(rmse(&[0.0], &[1.0, 2.0]).is_err());

        let same = comparison_metrics(&[1.0, 2.0], &[1.5, 2.5], &[1.5, 2.5], -3.0, -3.0).unwrap();
        assert_eq!(same.delta_rmse_pct, Some(0.0));
        assert_eq!(same.delta_elbo, 0.0);

        let perfect_ref =
            comparison_metrics(&[1.0, 2.0], &[1.5, 2.5], &[1.0, 2.0], -2.0, -3.0).unwrap();
        assert_eq!(perfect_ref.delta_rmse_pct, None);
        assert_eq!(perfect_ref.delta_elbo, 1.0);

        let worse = comparison_metrics(&[0.0, 0.0], &[2.0, 2.0], &[1.0, 1.0], 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(worse.delta_rmse_pct.unwrap(), 100.0, epsilon = 1e-12);
    }
}
