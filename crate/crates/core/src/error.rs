use thiserror::Error;

/// Errors raised by the estimation and inference routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cholesky factorization failed at pivot {pivot} (value {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("matrix is not symmetric: entries ({row}, {col}) differ by {gap:e}")]
    NotSymmetric { row: usize, col: usize, gap: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("solver did not converge after {sweeps} sweeps (kkt gap {kkt_gap:e})")]
    NotConverged { sweeps: usize, kkt_gap: f64 },

    #[error("subgradient certificate is undefined for lambda = 0")]
    ZeroLambda,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("noise level estimate collapsed to {sigma:e} (interpolating fit)")]
    DegenerateNoise { sigma: f64 },

    #[error("nodewise regression for column {node} failed: {source}")]
    Nodewise { node: usize, source: Box<Error> },

    #[error("nodewise regression for column {node} is degenerate: tau^2 = {tau_sq:e}")]
    DegenerateNode { node: usize, tau_sq: f64 },

    #[error("approximate-inverse certificate failed for row {node}: excess {excess:e}")]
    Certificate { node: usize, excess: f64 },

    #[error("complete separation suspected: max |linear predictor| = {max_eta:e}")]
    Separation { max_eta: f64 },

    #[error("inconsistent model triple: max |Y - X beta0 - eps| = {gap:e}")]
    InconsistentModel { gap: f64 },

    #[error("replication {rep} failed: {source}")]
    Replication { rep: usize, source: Box<Error> },

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical routines (as opposed to bad input).
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::NotConverged { .. }
            | Error::DegenerateNoise { .. }
            | Error::DegenerateNode { .. }
            | Error::Certificate { .. }
            | Error::Separation { .. }
            | Error::NotPositiveDefinite { .. } => true,
            Error::Nodewise { source, .. } | Error::Replication { source, .. } => {
                source.is_solver_failure()
            }
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
