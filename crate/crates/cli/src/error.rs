use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{context}: {message}")]
    Compute { context: String, message: String },
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

/// Machine-readable error line written to stderr.
#[derive(Debug, Serialize)]
pub struct ErrorRecord<'a> {
    pub kind: &'a str,
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Compute { .. } => 1,
            CliError::Io { .. } => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config_error",
            CliError::Compute { .. } => "computation_error",
            CliError::Io { .. } => "io_error",
        }
    }

    pub fn to_json(&self) -> String {
        let rec = ErrorRecord { kind: self.kind(), message: self.to_string(), exit_code: self.exit_code() };
        serde_json::json!({ "error": rec }).to_string()
    }
}

/// Wraps a downstream error with what was being computed.
pub fn compute<E: std::fmt::Display>(context: impl Into<String>) -> impl FnOnce(E) -> CliError {
    let context = context.into();
    move |e| CliError::Compute { context, message: e.to_string() }
}
