use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("state outside the dynamics domain: {0}")]
    Domain(String),

    #[error("propagation aborted at t = {time:.6} s: {reason}")]
    PropagationAbort { time: f64, reason: String },

    #[error("{quantity} = {value} outside valid range [{low}, {high}]")]
    Range {
        quantity: &'static str,
        value: f64,
        low: f64,
        high: f64,
    },

    #[error("invalid {key}: {message}")]
    Validation { key: String, message: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("all {count} sweep points failed:\n{diagnostics}")]
    AllPointsFailed { count: usize, diagnostics: String },

    #[error("refinement refused: {0}")]
    RefinementRefused(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Csv { path: String, message: String },
}

impl Error {
    pub fn validation(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
