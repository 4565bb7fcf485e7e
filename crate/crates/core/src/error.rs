use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("field `{kind}` is singular at (t={t}, x={x:?})")]
    Singular { kind: String, t: f64, x: Vec<f64> },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("region not contained in the grid: {0}")]
    OutsideGrid(String),

    #[error("negative value {value} at cell {cell} of a nonnegative input")]
    Negative { cell: usize, value: f64 },

    #[error("empty {0}")]
    Empty(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("every path was censored before the first ladder point")]
    AllCensored,

    #[error("quadrature budget exceeded: {requested} grid convolutions requested, budget is {budget}")]
    Budget { requested: usize, budget: usize },

    #[error("reverse Hölder bound with A={a} fails on box {boxed}: ratio {ratio}")]
    ReverseHolderViolation { boxed: String, a: f64, ratio: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name: name.to_string(),
        reason: reason.into(),
    }
}
