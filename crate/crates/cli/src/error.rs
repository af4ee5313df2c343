//! CLI error taxonomy and the exit-code contract.
//!
//! Exit codes: 0 success, 1 `--check` criterion failure, 2 parse error,
//! 3 validation error, 4 runtime abort. Errors are emitted as one JSON
//! object on stderr so callers can consume them mechanically.

use hybridsim_core::ident::IdentError;
use hybridsim_core::scenario::ScenarioError;
use hybridsim_core::sim::SimError;
use hybridsim_core::trace::TraceCsvError;

#[derive(Debug)]
pub enum CliError {
    /// Unreadable or syntactically/schematically malformed input.
    Parse(String),
    /// Input parsed but violates semantic invariants.
    Validation(String),
    /// The run itself failed (event budget, write failure).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Parse(_) => "parse",
            CliError::Validation(_) => "validation",
            CliError::Runtime(_) => "runtime",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Parse(m) | CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }

    /// Machine-readable stderr payload.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "message": self.message(),
        })
        .to_string()
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io(_) | ScenarioError::Json(_) => CliError::Parse(e.to_string()),
            ScenarioError::Invalid(_) => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Invalid(_) => CliError::Validation(e.to_string()),
            SimError::Scenario(inner) => inner.into(),
            SimError::EventLimit { .. } | SimError::Control(_) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<TraceCsvError> for CliError {
    fn from(e: TraceCsvError) -> Self {
        match e {
            TraceCsvError::Trace(inner) => inner.into(),
            other => CliError::Parse(other.to_string()),
        }
    }
}

impl From<IdentError> for CliError {
    fn from(e: IdentError) -> Self {
        match e {
            IdentError::InsufficientData { .. }
            | IdentError::RankDeficient { .. }
            | IdentError::BadRidge(_) => CliError::Validation(e.to_string()),
            other => CliError::Parse(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("io error: {e}"))
    }
}
