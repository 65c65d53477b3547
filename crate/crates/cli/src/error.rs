use serde::Serialize;
use thiserror::Error;

/// Process exit statuses.
pub mod exit {
    pub const OK: u8 = 0;
    pub const OTHER: u8 = 1;
    pub const PARSE: u8 = 2;
    pub const INFEASIBLE: u8 = 3;
    pub const ORACLE_MISMATCH: u8 = 4;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorKind {
    /// Malformed TOML or unknown keys.
    Parse,
    /// Well-formed document with values the model rejects.
    Schema,
    Infeasible,
    OracleMismatch,
    Io,
    /// The reader of the output went away; not reported.
    BrokenPipe,
    Solver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Error)]
#[error("{message}")]
pub struct CliError {
    #[serde(rename = "error")]
    pub kind: ErrorKind,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
}

impl CliError {
    fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        CliError { kind, message: message.into(), field: None, line: None }
    }

    pub fn parse(message: impl Into<String>, line: Option<usize>) -> Self {
        CliError { line, ..Self::new(ErrorKind::Parse, message) }
    }

    pub fn schema(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Schema, message)
    }

    pub fn invalid(message: impl Into<String>, field: impl Into<String>, line: usize) -> Self {
        CliError { field: Some(field.into()), line: Some(line), ..Self::new(ErrorKind::Schema, message) }
    }

    pub fn infeasible(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Infeasible, message)
    }

    pub fn oracle_mismatch(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::OracleMismatch, message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Io, message)
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind {
            ErrorKind::Parse | ErrorKind::Schema => exit::PARSE,
            ErrorKind::Infeasible => exit::INFEASIBLE,
            ErrorKind::OracleMismatch => exit::ORACLE_MISMATCH,
            ErrorKind::BrokenPipe => exit::OK,
            ErrorKind::Io | ErrorKind::Solver => exit::OTHER,
        }
    }

    /// One-line JSON form written to the diagnostic stream.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error records serialize")
    }
}

impl From<tariff_core::Error> for CliError {
    fn from(e: tariff_core::Error) -> Self {
        use tariff_core::Error as E;
        match e {
            E::Infeasible { .. } | E::IncentiveViolation { .. } => Self::infeasible(e.to_string()),
            E::EmptyMarket
            | E::InvalidTheta { .. }
            | E::InvalidPopulation { .. }
            | E::InvalidSupply(_)
            | E::DuplicateTheta { .. } => Self::schema(e.to_string()),
            other => Self::new(ErrorKind::Solver, other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            return Self::new(ErrorKind::BrokenPipe, e.to_string());
        }
        Self::io(e.to_string())
    }
}
