use thiserror::Error;

/// Errors raised across the identification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("{}", format_message(*.line, .message))]
    Format { line: Option<usize>, message: String },

    #[error("unstable recursion: {0}")]
    Stability(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_message(line: Option<usize>, message: &str) -> String {
    match line {
        Some(line) => format!("format error at line {line}: {message}"),
        None => format!("format error: {message}"),
    }
}

impl Error {
    pub(crate) fn format_at(line: usize, message: impl Into<String>) -> Self {
        Error::Format { line: Some(line), message: message.into() }
    }

    pub(crate) fn format(message: impl Into<String>) -> Self {
        Error::Format { line: None, message: message.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
