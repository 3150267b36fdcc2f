//! CLI error type and its exit-code contract:
//! 1 = I/O failure, 2 = configuration error, 3 = numeric failure.

use crate::config::ConfigError;

#[derive(Debug)]
pub enum CliError {
    /// Unreadable/unwritable files. Exit code 1.
    Io(String),
    /// Bad config or arguments. Exit code 2.
    Config(String),
    /// Divergence, non-finite values, or a failed verification. Exit code 3.
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Io(m) => write!(f, "io error: {m}"),
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<bnmemo::Error> for CliError {
    fn from(e: bnmemo::Error) -> Self {
        use bnmemo::Error as E;
        match e {
            E::Io(inner) => CliError::Io(inner.to_string()),
            E::NonFinite { .. } | E::Diverged { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}
