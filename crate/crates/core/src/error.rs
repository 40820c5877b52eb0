//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the numeric layers.
///
/// Variants carry enough context to name the offending input (coordinate
/// index, query value) so callers can report failures without re-deriving
/// them.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Posterior-mean inversion could not bracket the target.
    #[error(
        "inversion bracket expansion failed for coordinate {coord}: \
         S({upper:.6e}) = {reached:.6e} still below target {target:.6e} \
         after {expansions} doublings"
    )]
    BracketExpansion {
        coord: usize,
        target: f64,
        upper: f64,
        reached: f64,
        expansions: usize,
    },

    /// Posterior-mean inversion ran out of iterations.
    #[error(
        "inversion did not converge for coordinate {coord}: \
         residual {residual:.6e} after {iters} iterations"
    )]
    InversionStalled {
        coord: usize,
        residual: f64,
        iters: usize,
    },

    /// An inverse-interpolation query fell outside the reachable range.
    #[error(
        "inversion target {target:.6e} for coordinate {coord} is outside the \
         invertible range [0, {max_reachable:.6e}] after {expansions} grid extensions"
    )]
    OutOfRange {
        coord: usize,
        target: f64,
        max_reachable: f64,
        expansions: usize,
    },

    /// A structural invariant failed; indicates a bug, not bad input.
    #[error("internal invariant violated: {0}")]
    Internal(String),

    /// A filesystem operation failed; `path` names the file involved.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A data file could not be parsed; `line` is 1-based.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// The objective or its gradient stopped being finite mid-solve.
    ///
    /// The iterate at which the failure occurred is preserved so callers can
    /// inspect or restart from it.
    #[error("non-finite {what} at iteration {iter}")]
    NonFinite {
        what: &'static str,
        iter: usize,
        iterate: Vec<f64>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
