use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("box center ({x:.3}, {y:.3}) lies outside the grid")]
    OutsideGrid { x: f64, y: f64 },

    #[error("gaussian radius undefined for {l}x{w} cells at overlap {overlap}: negative discriminant")]
    NegativeDiscriminant { l: usize, w: usize, overlap: f64 },

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("{users} users cannot be served by {stations} base stations")]
    TooManyUsers { users: usize, stations: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("{0} boxes exceed the classifier capacity of {1}")]
    TooManyBoxes(usize, usize),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed data: {0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(expected: impl std::fmt::Debug, actual: impl std::fmt::Debug) -> Self {
        Error::Shape {
            expected: format!("{expected:?}"),
            actual: format!("{actual:?}"),
        }
    }

    /// True for errors caused by user-supplied configuration.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::TooManyUsers { .. })
    }
}
