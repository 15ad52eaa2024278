use thiserror::Error;

pub type Result<T> = std::result::Result<T, GptError>;

#[derive(Debug, Error)]
pub enum GptError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("no response value exceeds the threshold {0}")]
    EmptyExceedance(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: String, message: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("no leaf converged ({0} leaves flagged)")]
    NonConvergence(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl GptError {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            GptError::Parse { .. } | GptError::EmptyInput(_) | GptError::Csv(_) | GptError::Json(_) => 2,
            GptError::Schema(_) => 2,
            GptError::EmptyExceedance(_) | GptError::InsufficientData(_) | GptError::DegenerateSample(_) => 3,
            GptError::NonConvergence(_) => 4,
            GptError::Domain(_) | GptError::InvalidConfig(_) | GptError::Io(_) => 1,
        }
    }
}
