//! Process-level error carrying the exit status it maps to.

use std::fmt;

use mercer_field::Error as CoreError;

/// Exit status for a kernel that failed validation, or for data that
/// violates a library precondition.
pub const EXIT_VALIDATION: u8 = 2;
/// Exit status for configuration, parse, and file-system errors.
pub const EXIT_PARSE: u8 = 3;
/// Exit status for a numerical routine that failed to converge.
pub const EXIT_NUMERICAL: u8 = 4;

/// An error plus the exit status the process reports for it.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    /// Configuration-stage error (exit status 3).
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_PARSE, message: message.into() }
    }

    /// Validation failure (exit status 2).
    pub fn validation(message: impl Into<String>) -> Self {
        Self { code: EXIT_VALIDATION, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let code = match &e {
            CoreError::Parse { .. } | CoreError::Io(_) => EXIT_PARSE,
            CoreError::NumericalFailure { .. } => EXIT_NUMERICAL,
            _ => EXIT_VALIDATION,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self { code: EXIT_PARSE, message: e.to_string() }
    }
}
