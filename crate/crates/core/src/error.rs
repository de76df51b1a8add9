use thiserror::Error;

use crate::model::Violation;

#[derive(Debug, Error)]
pub enum ReidError {
    #[error("invalid matrix: {}", format_violations(.0))]
    InvalidMatrix(Vec<Violation>),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("observation vector has probability zero under every prior component")]
    ImpossibleObservation,

    #[error("{0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl ReidError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        ReidError::InvalidArgument(msg.into())
    }

    /// True for failures caused by reading or writing files, as opposed to
    /// inputs that parsed but failed validation.
    pub fn is_io(&self) -> bool {
        matches!(self, ReidError::Io(_))
    }
}

fn format_violations(v: &[Violation]) -> String {
    let shown: Vec<String> = v.iter().take(5).map(|x| x.to_string()).collect();
    if v.len() > 5 {
        format!("{} (and {} more)", shown.join("; "), v.len() - 5)
    } else {
        shown.join("; ")
    }
}

pub type Result<T, E = ReidError> = std::result::Result<T, E>;
