use thiserror::Error;

/// Failures that abort a command. Validation mismatches are not errors; they
/// are reported rows plus a nonzero exit.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("kernel: {0}")]
    Kernel(#[from] mobconv_core::ConvError),

    #[error("report: {0}")]
    Report(String),
}

impl CliError {
    /// Exit status for this failure (validation failures use 1 and never get here).
    pub fn exit_code(&self) -> i32 {
        2
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Report(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Report(e.to_string())
    }
}
