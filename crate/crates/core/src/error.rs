use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("point ({x}, {y}) lies outside the domain")]
    Domain { x: f64, y: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid specification: {0}")]
    Spec(String),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("incompatible Neumann data: source integral {source_integral:e} vs boundary flux {flux_integral:e}")]
    Compatibility {
        source_integral: f64,
        flux_integral: f64,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("bracket failure: {0}")]
    Bracket(String),

    #[error("eigensolver stagnated after {iterations} iterations (residual {residual:e})")]
    Eigen { iterations: usize, residual: f64 },

    #[error("chart error: {0}")]
    Chart(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("snapshot format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
