use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{context}: did not converge within {iterations} iterations (residuals {residuals:?})")]
    NotConverged {
        context: String,
        iterations: usize,
        residuals: Vec<f64>,
    },

    #[error("linear program: {0}")]
    Lp(#[from] crate::lp::LpError),

    #[error("refused: {0}")]
    Refused(String),

    #[error("enumeration of {requested} points exceeds the cap of {cap}")]
    CapExceeded { requested: u128, cap: u128 },

    #[error("certificate violated: {0}")]
    Certificate(String),

    #[error("internal invariant broken: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
