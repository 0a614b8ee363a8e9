//! `mcflow` command-line front end.

mod commands;
mod settings;

use std::process::ExitCode;

use clap::Parser;

use settings::Cli;

/// What a finished command reports through the exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// The solver certified that the demands cannot be routed.
    Fail,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or malformed input.
    Usage(String),
    /// The solver itself broke down.
    Solver(String),
}

impl From<mcflow::Error> for CliError {
    fn from(e: mcflow::Error) -> Self {
        use mcflow::Error::*;
        match e {
            Parse(_) | InvalidGraph(_) | InvalidInstance(_) | LengthMismatch { .. } | InvalidParameter(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Solver(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Fail) => ExitCode::from(1),
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Solver(msg)) => {
            eprintln!("solver error: {msg}");
            ExitCode::from(3)
        }
    }
}
