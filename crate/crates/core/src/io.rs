//! File formats: headerless CSV for numeric data and JSON documents for
//! results and simulation sidecars.
//!
//! CSV values are written with Rust's shortest round-trip float formatting
//! and JSON numbers with 17 significant digits, so both formats reproduce
//! the original f64 bits on read-back and identical inputs produce
//! byte-identical files.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{FitResult, FitTimings};
use crate::priors::Prior;
use crate::simulate::ComparisonMetrics;

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

pub fn write_matrix_csv(path: &Path, a: &Array2<f64>) -> Result<()> {
    let mut buf = String::with_capacity(a.len() * 20);
    for row in a.rows() {
        let mut first = true;
        for v in row {
            if !first {
                buf.push(',');
            }
            buf.push_str(&format!("{v}"));
            first = false;
        }
        buf.push('\n');
    }
    fs::write(path, buf).map_err(|e| Error::io(path_str(path), e))
}

pub fn write_vector_csv(path: &Path, v: &[f64]) -> Result<()> {
    let mut buf = String::with_capacity(v.len() * 20);
    for x in v {
        buf.push_str(&format!("{x}\n"));
    }
    fs::write(path, buf).map_err(|e| Error::io(path_str(path), e))
}

fn parse_field(path: &Path, line_no: usize, field: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        path: path_str(path),
        line: line_no,
        msg: format!("not a number: {field:?}"),
    })
}

pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path_str(path), e))?;
    let mut flat: Vec<f64> = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0;
        for field in line.split(',') {
            flat.push(parse_field(path, i + 1, field)?);
            count += 1;
        }
        match width {
            None => width = Some(count),
            Some(w) if w != count => {
                return Err(Error::Parse {
                    path: path_str(path),
                    line: i + 1,
                    msg: format!("row has {count} columns, expected {w}"),
                });
            }
            Some(_) => {}
        }
        rows += 1;
    }
    let cols = width.ok_or_else(|| Error::Parse {
        path: path_str(path),
        line: 1,
        msg: "empty matrix".into(),
    })?;
    Array2::from_shape_vec((rows, cols), flat).map_err(|e| Error::Parse {
        path: path_str(path),
        line: rows,
        msg: e.to_string(),
    })
}

pub fn read_vector_csv(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path_str(path), e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        out.push(parse_field(path, i + 1, line)?);
    }
    if out.is_empty() {
        return Err(Error::Parse {
            path: path_str(path),
            line: 1,
            msg: "empty vector".into(),
        });
    }
    Ok(out)
}

/// JSON formatter that writes every float with 17 significant digits,
/// enough to reproduce any f64 exactly on parse.
struct SciFormatter;

impl serde_json::ser::Formatter for SciFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

pub fn json_to_string<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SciFormatter);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Internal(format!("serialization failed: {e}")))?;
    out.push(b'\n');
    String::from_utf8(out).map_err(|e| Error::Internal(format!("non-utf8 JSON: {e}")))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, json_to_string(value)?).map_err(|e| Error::io(path_str(path), e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path_str(path), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path_str(path),
        line: e.line(),
        msg: e.to_string(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorDocument {
    /// "ash" or "point-normal".
    pub family: String,
    /// Component variances; the slab variance alone for point-normal.
    pub grid: Vec<f64>,
    /// Mixture weights; the slab weight alone for point-normal.
    pub weights: Vec<f64>,
}

impl From<&Prior> for PriorDocument {
    fn from(p: &Prior) -> Self {
        match p {
            Prior::Ash(a) => PriorDocument {
                family: "ash".into(),
                grid: a.grid().to_vec(),
                weights: a.weights().to_vec(),
            },
            Prior::PointNormal(pn) => PriorDocument {
                family: "point-normal".into(),
                grid: vec![pn.slab_var()],
                weights: vec![pn.w()],
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsDocument {
    /// Error of the fitted signal against the reference, per observation.
    pub rmse: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delta_rmse_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delta_elbo: Option<f64>,
    /// Mean squared error of the raw observations against the true signal.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mse_y: Option<f64>,
    /// Mean squared error of the fitted signal against the true signal.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mse_fit: Option<f64>,
}

impl MetricsDocument {
    pub fn from_comparison(m: &ComparisonMetrics) -> Self {
        MetricsDocument {
            rmse: m.rmse,
            delta_rmse_pct: m.delta_rmse_pct,
            delta_elbo: Some(m.delta_elbo),
            mse_y: None,
            mse_fit: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingsDocument {
    pub total_secs: f64,
    pub matvec_secs: f64,
    pub inversion_secs: f64,
}

impl From<&FitTimings> for TimingsDocument {
    fn from(t: &FitTimings) -> Self {
        TimingsDocument {
            total_secs: t.total_secs,
            matvec_secs: t.matvec_secs,
            inversion_secs: t.inversion_secs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    /// "direct", "compound", or "cavi".
    pub method: String,
    pub prior: PriorDocument,
    pub sigma2: f64,
    pub elbo: f64,
    pub n_iters: usize,
    pub status: String,
    pub coefficients: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub metrics: Option<MetricsDocument>,
    pub timings: TimingsDocument,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub spec: Option<serde_json::Value>,
}

impl ResultDocument {
    pub fn from_fit(method: &str, fit: &FitResult) -> Self {
        ResultDocument {
            method: method.into(),
            prior: PriorDocument::from(&fit.prior),
            sigma2: fit.sigma2,
            elbo: fit.elbo,
            n_iters: fit.n_iters,
            status: fit.status.to_string(),
            coefficients: fit.coefficients.to_vec(),
            metrics: None,
            timings: TimingsDocument::from(&fit.timings),
            seed: None,
            spec: None,
        }
    }
}

/// Sidecar describing how a simulated dataset was generated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthDocument {
    /// "linreg" or "trendfilter".
    pub kind: String,
    pub seed: u64,
    pub sigma2: f64,
    pub spec: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub b_true: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mu_true: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub changepoints: Option<Vec<usize>>,
}
