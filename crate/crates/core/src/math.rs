//! Small numeric helpers shared across modules.

/// ln(2π).
pub const LN_2PI: f64 = 1.837_877_066_409_345_2;

/// Log-sum-exp of a slice, stable under large magnitudes.
///
/// `-inf` entries are ignored (they contribute zero mass); an all-`-inf`
/// input returns `-inf`. Any NaN propagates.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for &t in terms {
        if t.is_nan() {
            return f64::NAN;
        }
        if t > max {
            max = t;
        }
    }
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut sum = 0.0;
    for &t in terms {
        if t > f64::NEG_INFINITY {
            sum += (t - max).exp();
        }
    }
    // sum >= 1 because the max term contributes exp(0); ln_1p on the rest
    // keeps full precision when the max dominates.
    max + (sum - 1.0).ln_1p()
}

/// Log-density of N(z | 0, var).
pub fn log_normal_pdf(z: f64, var: f64) -> f64 {
    debug_assert!(var > 0.0);
    -0.5 * (LN_2PI + var.ln()) - z * z / (2.0 * var)
}

/// Logistic function, stable for large |t|.
pub fn expit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`expit`]; returns ±inf at the endpoints.
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn log_sum_exp_matches_naive_on_small_terms() {
        let terms = [0.3_f64, -1.2, 0.7];
        let naive: f64 = terms.iter().map(|t: &f64| t.exp()).sum::<f64>().ln();
        assert_abs_diff_eq!(log_sum_exp(&terms), naive, epsilon = 1e-14);
    }

    #[test]
    fn log_sum_exp_is_shift_invariant_at_large_magnitude() {
        let terms = [-1000.0, -1000.5, -999.2];
        let shifted: Vec<f64> = terms.iter().map(|t| t + 1000.0).collect();
        assert_abs_diff_eq!(
            log_sum_exp(&terms) + 1000.0,
            log_sum_exp(&shifted),
            epsilon = 1e-12
        );
    }

    #[test]
    fn log_sum_exp_skips_neg_infinity_mass() {
        let with_hole = [f64::NEG_INFINITY, -0.5, f64::NEG_INFINITY, 1.5];
        let dense = [-0.5, 1.5];
        assert_eq!(log_sum_exp(&with_hole), log_sum_exp(&dense));
        assert_eq!(
            log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn log_normal_pdf_standard_at_zero() {
        // ln N(0 | 0, 1) = -0.5 ln(2π)
        assert_abs_diff_eq!(log_normal_pdf(0.0, 1.0), -0.5 * LN_2PI, epsilon = 1e-15);
    }

    #[test]
    fn expit_logit_round_trip() {
        for &p in &[1e-12, 0.25, 0.5, 0.75, 1.0 - 1e-12] {
            assert_abs_diff_eq!(expit(logit(p)), p, epsilon = 1e-12);
        }
        assert_eq!(expit(f64::NEG_INFINITY), 0.0);
        assert_eq!(expit(f64::INFINITY), 1.0);
    }
}
