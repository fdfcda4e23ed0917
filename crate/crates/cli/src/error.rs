use thiserror::Error;

/// Failure classes, each with a stable exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config file, flag or parameter: exit 2.
    #[error("config error: {0}")]
    Config(String),
    /// Unreadable, malformed or insufficient input data: exit 3.
    #[error("data error: {0}")]
    Data(String),
    /// Numerical failure: exit 4.
    #[error("numeric error: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<ddsindy::Error> for CliError {
    fn from(e: ddsindy::Error) -> Self {
        use ddsindy::Error as E;
        let message = e.to_string();
        match e {
            E::Parameter(_) => CliError::Config(message),
            E::Schema(_) | E::Format { .. } | E::InsufficientData(_) | E::Io(_) => CliError::Data(message),
            E::Dimension(_) | E::Stability(_) => CliError::Numeric(message),
        }
    }
}
