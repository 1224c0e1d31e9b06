use std::path::PathBuf;

use thiserror::Error;

use crate::dre::SolveOutcome;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    Dimension {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("matrix exponential overflowed after {squarings} squarings (input 1-norm {norm_one:e})")]
    Overflow { squarings: u32, norm_one: f64 },

    #[error("shifted operator sI - A is singular for s = {shift}")]
    SingularShift { shift: f64 },

    #[error("matrix is singular: {0}")]
    Singular(&'static str),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("{what} is not symmetric positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { what: &'static str, min_eig: f64 },

    #[error("{what} is not symmetric (asymmetry {asym:e})")]
    NotSymmetric { what: &'static str, asym: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("initial block has numerical rank zero; Krylov basis is empty")]
    EmptyBasis,

    #[error("basis does not contain [Z C] (relative residual {residual:e})")]
    ProjectionInvalid { residual: f64 },

    #[error(
        "substep {substep}: U is numerically singular (condition estimate {cond:e}); increase the substep count"
    )]
    SubstepBreakdown { substep: usize, cond: f64 },

    #[error("a posteriori estimate is only defined for polynomial Krylov decompositions")]
    UnsupportedEstimate,

    #[error("tolerance {tol:e} not met at k = {} (estimate {:e})", best.k_used, best.est.unwrap_or(f64::NAN))]
    ToleranceNotMet { tol: f64, best: Box<SolveOutcome> },

    #[error("dense oracle refused: n = {n} exceeds limit {limit}")]
    OracleTooLarge { n: usize, limit: usize },

    #[error("integration became unstable ({0}); use more steps")]
    Instability(String),

    #[error("unknown closed form `{0}`")]
    UnknownClosedForm(String),

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("unsupported Matrix Market format: {0}")]
    UnsupportedFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Dimension {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
