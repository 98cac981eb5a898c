//! Command-line front end. Subcommands wrap the library's channel-level,
//! cavity-level, oracle, and Monte Carlo entry points; everything is
//! deterministic given the same flags, config, and seed.
//!
//! Exit codes: 0 success, 1 parameter-domain error (or a failed check),
//! 2 numerical-convergence failure, 3 configuration/usage error.

mod commands;
mod config;
mod output;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;

#[derive(Debug)]
pub enum CliError {
    /// Unphysical or unsupported parameter values.
    Domain(String),
    /// A numerical routine failed to converge.
    Convergence(String),
    /// Bad flags or config file.
    Config(String),
    /// Output could not be written.
    Io(String),
    /// A verification command ran but its checks did not pass.
    CheckFailed(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Domain(_) | CliError::Io(_) | CliError::CheckFailed(_) => 1,
            CliError::Convergence(_) => 2,
            CliError::Config(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Domain(m) => write!(f, "parameter domain: {m}"),
            CliError::Convergence(m) => write!(f, "numerical convergence: {m}"),
            CliError::Config(m) => write!(f, "configuration: {m}"),
            CliError::Io(m) => write!(f, "io: {m}"),
            CliError::CheckFailed(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl From<noisemetry::Error> for CliError {
    fn from(e: noisemetry::Error) -> Self {
        match e {
            noisemetry::Error::Domain(m) => CliError::Domain(m),
            noisemetry::Error::Convergence(m) => CliError::Convergence(m),
        }
    }
}

fn main() -> ExitCode {
    let cli = match config::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 3,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
