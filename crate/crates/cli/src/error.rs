use serde::Serialize;

use fshe_core::Error;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { kind: "config", message: message.into(), exit_code: EXIT_CONFIG }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError { kind: "io", message: message.into(), exit_code: EXIT_CONFIG }
    }

    pub fn verification(message: impl Into<String>) -> Self {
        CliError { kind: "verification", message: message.into(), exit_code: EXIT_VERIFY }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error serializes")
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let (kind, exit_code) = match &e {
            Error::Assumption(_) => ("assumption", EXIT_CONFIG),
            Error::Fit(_) => ("fit", EXIT_NUMERICAL),
            e if e.is_numerical() => ("numerical", EXIT_NUMERICAL),
            _ => ("config", EXIT_CONFIG),
        };
        CliError { kind, message: e.to_string(), exit_code }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::io(e.to_string())
    }
}
