use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("grid functions live on different lattices")]
    LatticeMismatch,

    #[error("domain has no interior nodes")]
    EmptyInterior,

    #[error("interior mask touches the outermost lattice layer at node {0:?}")]
    MaskOnEdge(Vec<usize>),

    #[error("function must be strictly positive on the interior; node {node:?} has value {value}")]
    NotStrictlyPositive { node: Vec<usize>, value: f64 },

    #[error("function must be nonnegative; node {node:?} has value {value}")]
    Negative { node: Vec<usize>, value: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("expression error at offset {offset}: {message}")]
    Expression { offset: usize, message: String },

    #[error("family `{0}` has no dilation law")]
    NoDilation(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if !(p.is_finite() && p > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "exponent p must satisfy 1 < p < inf, got {p}"
        )));
    }
    Ok(())
}
