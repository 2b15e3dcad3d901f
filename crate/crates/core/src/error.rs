use thiserror::Error;

/// Errors raised while loading data, configuring, or running the sampler.
#[derive(Debug, Error)]
pub enum GlfmError {
    #[error("attribute spec line {line}: {message}")]
    Spec { line: usize, message: String },

    #[error("data row {row}, column `{column}`: {message}")]
    Data {
        row: usize,
        column: String,
        message: String,
    },

    #[error("malformed table: {0}")]
    Table(String),

    #[error("column `{0}` is constant; cannot fit shift/scale parameters")]
    DegenerateColumn(String),

    #[error("invalid hyperparameter: {0}")]
    Hyperparam(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("value {value} outside the domain of {what}")]
    Domain { what: &'static str, value: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GlfmError>;
