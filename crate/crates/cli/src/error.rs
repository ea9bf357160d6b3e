use thiserror::Error;

/// Failure of one command, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical check failed: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// 1 usage/config, 2 data, 3 numerical check.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<memgat::Error> for CliError {
    fn from(e: memgat::Error) -> Self {
        use memgat::Error as E;
        match e {
            E::Config(m) => CliError::config("config", m),
            E::Dimension { .. }
            | E::Shape(_)
            | E::Parameter(_)
            | E::Masking { .. }
            | E::Distribution { .. }
            | E::Determinism { .. }
            | E::Optimizer(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
