//! Error type for the command-line pipeline with process exit codes.
//!
//! Failures fall into three buckets: bad configuration (the caller can fix
//! the config file or flags), bad data (missing or malformed dataset files),
//! and internal assertion failures that indicate a bug in the pipeline
//! itself. Each bucket maps to a distinct exit code so wrapper scripts can
//! react without parsing stderr.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Configuration problem: unreadable or invalid config file, bad flag.
    #[error("config error: {0}")]
    Config(String),

    /// Dataset or artifact problem: missing files, malformed content.
    #[error("data error: {0}")]
    Data(String),

    /// Pipeline bug, for example a training plan that fails the temporal
    /// hygiene check. Never caused by user input alone.
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl From<suiterank::Error> for CliError {
    fn from(err: suiterank::Error) -> Self {
        CliError::Data(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct_and_nonzero() {
        let codes = [
            CliError::Config(String::new()).exit_code(),
            CliError::Data(String::new()).exit_code(),
            CliError::Internal(String::new()).exit_code(),
        ];
        assert_eq!(codes, [2, 3, 4]);
    }

    #[test]
    fn core_errors_become_data_errors() {
        let err: CliError = suiterank::Error::UnknownUnit("u9".into()).into();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("u9"));
    }
}
