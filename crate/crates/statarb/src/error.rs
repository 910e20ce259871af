//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input row; carries the 1-based line number when known.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    /// Input violates a data precondition (non-positive price, duplicate key...).
    #[error("data error: {0}")]
    Data(String),

    /// No common dates across tickers after alignment.
    #[error("empty panel: no ticker has full-length history over the date range")]
    EmptyPanel,

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// Series without variation where variation is required.
    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    /// A return column with zero variance; carries the ticker.
    #[error("degenerate column: ticker {0} has zero variance")]
    DegenerateColumn(String),

    #[error("collinear regressors: {0}")]
    Collinear(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Eigenportfolio weights cannot be normalized (1'σ⁻¹v = 0).
    #[error("normalization error: {0}")]
    Normalization(String),

    /// γ outside the stability regime of the solvers.
    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    /// A matrix that must be positive definite is not.
    #[error("conditioning error: {0}")]
    Conditioning(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    /// Backward Riccati integration blew up.
    #[error("divergence at step {step}: {msg}")]
    Divergence { step: usize, msg: String },

    /// Iterative solver failed to reach tolerance.
    #[error("convergence failure after {iterations} iterations (best residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    /// Steady-state linear system for b is singular.
    #[error("degenerate steady state: {0}")]
    DegenerateSteadyState(String),

    /// Wealth hit zero or below during simulation.
    #[error("bankruptcy at step {step}{}", date.as_ref().map(|d| format!(" ({d})")).unwrap_or_default())]
    Bankruptcy { step: usize, date: Option<String> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numeric(_)
                | Error::Divergence { .. }
                | Error::Convergence { .. }
                | Error::DegenerateSteadyState(_)
                | Error::Conditioning(_)
                | Error::Bankruptcy { .. }
        )
    }
}
