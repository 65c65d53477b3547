//! Command-line front end: scenario parsing, solver dispatch and output
//! records. The `tariff` binary is a thin wrapper over [`commands::run`].

pub mod commands;
pub mod error;
pub mod record;
pub mod scenario;

pub use commands::{run, Cli, Command};
pub use error::{exit, CliError, ErrorKind};
pub use record::{fmt_sig, Format, ResultRecord, SweepRow};
pub use scenario::{parse_scenario, ScenarioFile};
