use thiserror::Error;

/// Errors raised by the analysis, simulation and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid degree distribution: {0}")]
    InvalidDistribution(String),

    #[error("negative coefficient {coeff} at degree {degree}")]
    NegativeCoefficient { degree: u32, coeff: f64 },

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("ensemble is marginally stable (critical point at x = 0)")]
    MarginallyStable,

    #[error("operation requires a regular ensemble")]
    NotRegular,

    #[error("state outside the feasible region: {0}")]
    InfeasibleState(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_) | Error::InfeasibleState(_) | Error::MarginallyStable
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
