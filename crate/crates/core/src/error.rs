use thiserror::Error;

pub type Result<T> = std::result::Result<T, AslnError>;

#[derive(Debug, Error)]
pub enum AslnError {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("rank error: eigenvalue {index} is {value:e}, below {threshold:e}")]
    Rank {
        index: usize,
        value: f64,
        threshold: f64,
    },

    #[error("training diverged at epoch {epoch}: weight norm {norm:e}")]
    Divergence { epoch: usize, norm: f64 },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("nonlinearity {0} is not odd; use the general error covariance")]
    NotOdd(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("linear algebra backend: {0}")]
    Backend(#[from] ndarray_linalg::error::LinalgError),

    #[error("malformed container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
