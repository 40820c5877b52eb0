//! Design-matrix abstraction.
//!
//! The objectives touch the design only through matrix-vector products, so
//! structured designs can swap in fast implementations. One evaluation of an
//! objective and its gradient costs exactly one forward and one adjoint
//! product; everything else is coordinate-wise.
//!
//! [`TrendFilterOperator`] is the design for trend filtering of order k:
//! X = H^(k+1), where H is the lower-triangular matrix of ones. A product
//! with H is a cumulative sum, so the forward map is k+1 cumulative sums
//! and the adjoint is k+1 reversed cumulative sums, both O((k+1)·n). The
//! scaled variant right-multiplies by diag(s_j) with
//! s_j = sqrt(max_j ‖x_j‖² / ‖x_j‖²), equalizing column norms: the forward
//! product scales its input before the sums, the adjoint scales its output
//! after them.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

/// A linear map X: ℝᵖ → ℝⁿ exposed through products only.
pub trait LinearOperator: Send + Sync {
    /// (n, p).
    fn shape(&self) -> (usize, usize);

    /// X·v for v of length p.
    fn matvec(&self, v: ArrayView1<f64>) -> Array1<f64>;

    /// Xᵀ·w for w of length n.
    fn rmatvec(&self, w: ArrayView1<f64>) -> Array1<f64>;

    /// ‖x_j‖² per column.
    fn column_sq_norms(&self) -> Array1<f64>;

    /// Materializes the operator column by column. Intended for small
    /// problems (oracles, cross-checks); cost is p forward products unless
    /// a denser representation already exists.
    fn to_dense(&self) -> Array2<f64> {
        let (n, p) = self.shape();
        let mut a = Array2::zeros((n, p));
        let mut basis = Array1::zeros(p);
        for j in 0..p {
            basis[j] = 1.0;
            let col = self.matvec(basis.view());
            a.column_mut(j).assign(&col);
            basis[j] = 0.0;
        }
        a
    }
}

/// Explicit dense design matrix.
pub struct DenseOperator {
    a: Array2<f64>,
}

impl DenseOperator {
    pub fn new(a: Array2<f64>) -> Result<Self> {
        let (n, p) = a.dim();
        if n == 0 || p == 0 {
            return Err(Error::invalid(format!(
                "design matrix must be non-empty, got {n} x {p}"
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("design matrix contains non-finite entries"));
        }
        Ok(DenseOperator { a })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.a
    }
}

impl LinearOperator for DenseOperator {
    fn shape(&self) -> (usize, usize) {
        self.a.dim()
    }

    fn matvec(&self, v: ArrayView1<f64>) -> Array1<f64> {
        self.a.dot(&v)
    }

    fn rmatvec(&self, w: ArrayView1<f64>) -> Array1<f64> {
        self.a.t().dot(&w)
    }

    fn column_sq_norms(&self) -> Array1<f64> {
        Array1::from_iter(self.a.columns().into_iter().map(|c| c.dot(&c)))
    }

    fn to_dense(&self) -> Array2<f64> {
        self.a.clone()
    }
}

/// Trend-filtering design H^(k+1) of order k ∈ {0, 1, 2}, square n x n,
/// optionally column-scaled to equal norms.
pub struct TrendFilterOperator {
    n: usize,
    order: usize,
    /// Column scale factors; `None` is the unscaled design.
    scale: Option<Vec<f64>>,
    /// ‖x_j‖² of the *unscaled* design, from the closed form.
    base_sq_norms: Vec<f64>,
}

/// Builds the trend-filtering operator.
///
/// Orders above 2 are rejected: the cumulative-sum factorization still
/// applies, but the binomial column norms overflow the integer range of f64
/// long before such fits are useful.
pub fn tf_operator(n: usize, order: usize, scaled: bool) -> Result<TrendFilterOperator> {
    if n == 0 {
        return Err(Error::invalid("trend-filter operator needs n >= 1"));
    }
    if order > 2 {
        return Err(Error::invalid(format!(
            "trend-filter order {order} not supported; use 0, 1, or 2"
        )));
    }
    let base_sq_norms = tf_column_sq_norms(n, order);
    let scale = if scaled {
        let max = base_sq_norms[0];
        Some(base_sq_norms.iter().map(|&c| (max / c).sqrt()).collect())
    } else {
        None
    };
    Ok(TrendFilterOperator {
        n,
        order,
        scale,
        base_sq_norms,
    })
}

/// Closed-form squared column norms of H^(k+1): column j (0-indexed) holds
/// the binomial coefficients C(m+k, k) for m = 0..n-1-j, so
/// ‖x_j‖² = Σ_{m=0}^{n-1-j} C(m+k, k)². Computed once via prefix sums.
fn tf_column_sq_norms(n: usize, order: usize) -> Vec<f64> {
    let mut prefix = Vec::with_capacity(n);
    let mut acc = 0.0;
    for m in 0..n {
        let c = binomial_rising(m, order);
        acc += c * c;
        prefix.push(acc);
    }
    (0..n).map(|j| prefix[n - 1 - j]).collect()
}

/// C(m+k, k) for k ∈ {0, 1, 2}.
fn binomial_rising(m: usize, k: usize) -> f64 {
    let m = m as f64;
    match k {
        0 => 1.0,
        1 => m + 1.0,
        _ => 0.5 * (m + 1.0) * (m + 2.0),
    }
}

impl TrendFilterOperator {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn is_scaled(&self) -> bool {
        self.scale.is_some()
    }
}

fn cumsum_in_place(v: &mut [f64]) {
    for i in 1..v.len() {
        v[i] += v[i - 1];
    }
}

fn reverse_cumsum_in_place(v: &mut [f64]) {
    for i in (0..v.len().saturating_sub(1)).rev() {
        v[i] += v[i + 1];
    }
}

impl LinearOperator for TrendFilterOperator {
    fn shape(&self) -> (usize, usize) {
        (self.n, self.n)
    }

    fn matvec(&self, v: ArrayView1<f64>) -> Array1<f64> {
        let mut out = v.to_owned();
        if let Some(scale) = &self.scale {
            for (x, &s) in out.iter_mut().zip(scale) {
                *x *= s;
            }
        }
        let slice = out.as_slice_mut().expect("owned array is contiguous");
        for _ in 0..=self.order {
            cumsum_in_place(slice);
        }
        out
    }

    fn rmatvec(&self, w: ArrayView1<f64>) -> Array1<f64> {
        let mut out = w.to_owned();
        let slice = out.as_slice_mut().expect("owned array is contiguous");
        for _ in 0..=self.order {
            reverse_cumsum_in_place(slice);
        }
        if let Some(scale) = &self.scale {
            for (x, &s) in out.iter_mut().zip(scale) {
                *x *= s;
            }
        }
        out
    }

    fn column_sq_norms(&self) -> Array1<f64> {
        match &self.scale {
            // Scaling makes every column norm equal to the first (largest)
            // by construction; return that exactly rather than s_j²·‖x_j‖².
            Some(_) => Array1::from_elem(self.n, self.base_sq_norms[0]),
            None => Array1::from_vec(self.base_sq_norms.clone()),
        }
    }
}

/// Wraps any operator with per-column scale factors: X' = X·diag(s).
///
/// Used to standardize columns to unit norm before a fit; coefficients in
/// the scaled basis map back to the original basis as b_j = s_j·b'_j.
pub struct ColumnScaledOperator {
    inner: Arc<dyn LinearOperator>,
    scale: Vec<f64>,
    sq_norms: Vec<f64>,
}

impl ColumnScaledOperator {
    pub fn new(inner: Arc<dyn LinearOperator>, scale: Vec<f64>) -> Result<Self> {
        let (_, p) = inner.shape();
        if scale.len() != p {
            return Err(Error::invalid(format!(
                "operator has {p} columns but {} scale factors were given",
                scale.len()
            )));
        }
        if scale.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::invalid("column scale factors must be finite and > 0"));
        }
        let base = inner.column_sq_norms();
        let sq_norms = base
            .iter()
            .zip(&scale)
            .map(|(&c, &s)| c * s * s)
            .collect();
        Ok(ColumnScaledOperator {
            inner,
            scale,
            sq_norms,
        })
    }

    /// Scales columns of `inner` to unit Euclidean norm.
    pub fn to_unit_columns(inner: Arc<dyn LinearOperator>) -> Result<Self> {
        let norms = inner.column_sq_norms();
        if norms.iter().any(|&c| c <= 0.0) {
            return Err(Error::invalid(
                "cannot standardize: some design column has zero norm",
            ));
        }
        let scale = norms.iter().map(|&c| 1.0 / c.sqrt()).collect();
        ColumnScaledOperator::new(inner, scale)
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }
}

impl LinearOperator for ColumnScaledOperator {
    fn shape(&self) -> (usize, usize) {
        self.inner.shape()
    }

    fn matvec(&self, v: ArrayView1<f64>) -> Array1<f64> {
        let scaled = Array1::from_iter(v.iter().zip(&self.scale).map(|(&x, &s)| x * s));
        self.inner.matvec(scaled.view())
    }

    fn rmatvec(&self, w: ArrayView1<f64>) -> Array1<f64> {
        let mut out = self.inner.rmatvec(w);
        for (x, &s) in out.iter_mut().zip(&self.scale) {
            *x *= s;
        }
        out
    }

    fn column_sq_norms(&self) -> Array1<f64> {
        Array1::from_vec(self.sq_norms.clone())
    }
}
