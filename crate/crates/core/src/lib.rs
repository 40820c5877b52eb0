//! Variational empirical Bayes for sparse multiple linear regression.
//!
//! The model is y = Xb + e with e ~ N(0, σ²Iₙ) and independent effect
//! priors b_j ~ g from a chosen family. Mean-field coordinate ascent on the
//! evidence lower bound is equivalent to minimizing a penalized-regression
//! objective in the posterior-mean coefficients, and that objective (or its
//! reparameterized form in normal-means space) is smooth enough to hand to a
//! quasi-Newton solver. The crate provides both formulations, the solver,
//! the prior machinery, fast trend-filtering design operators, a coordinate
//! ascent oracle for verification, and a simulation harness, behind both a
//! library API and the `gradvi` command-line tool.

pub mod cavi;
pub mod error;
pub mod fit;
pub mod invert;
pub mod io;
pub mod linop;
pub mod math;
pub mod objective;
pub mod optim;
pub mod priors;
pub mod simulate;

pub use cavi::{cavi_fit, CaviFit, CaviOptions, CaviState};
pub use error::{Error, Result};
pub use fit::{fit, fit_trendfilter, FitOptions, FitResult, FitTimings, TrendFit};
pub use invert::{invert, invert_fssi, invert_trisection, InversionMethod, InversionOptions};
pub use linop::{
    tf_operator, ColumnScaledOperator, DenseOperator, LinearOperator, TrendFilterOperator,
};
pub use objective::{
    objective_compound, objective_direct, penalty_compound, penalty_direct,
    recover_coefficients, ActiveBlocks, BoundObjective, ObjectiveForm, ObjectiveValue,
    PackedParams, PenaltyEval, RegressionData,
};
pub use optim::{minimize, SolverOptions, SolverResult, SolverStatus};
pub use priors::{default_ash_grid, AshPrior, NmEval, PointNormalPrior, Prior};
pub use simulate::{
    comparison_metrics, noise_variance_for_pve, rmse, sim_linreg, sim_trendfilter,
    ComparisonMetrics, DesignKind, LinregData, LinregSpec, TrendfilterData, TrendfilterSpec,
};
