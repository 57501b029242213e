use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A point lies outside the set where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A structural assumption (monotonicity of G, positivity of c, ...) failed.
    #[error("assumption violated: {0}")]
    Assumption(String),

    /// Assembled row with a negative off-diagonal weight.
    #[error("scheme is not monotone at node {node}: {detail}")]
    Scheme { node: usize, detail: String },

    #[error("no convergence after {} iterations (last residual {:.3e})", .residuals.len(), .residuals.last().copied().unwrap_or(f64::NAN))]
    Nonconvergence { residuals: Vec<f64> },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
