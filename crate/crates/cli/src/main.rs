//! `graphsig` command line. Every subcommand reads its inputs, calls one
//! library operation and writes the result.
//!
//! Exit codes: 0 success or accept, 1 file i/o, 2 verification reject,
//! 3 protocol abort, 4 configuration or parse error.

mod commands;
mod config;

use std::path::Path;
use std::process::ExitCode;

use clap::Parser;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("protocol aborted: {0}")]
    Protocol(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Protocol(_) => 3,
            CliError::Config(_) | CliError::Parse(_) => 4,
        }
    }
}

/// What a successful command decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    Accepted,
    Rejected,
}

fn main() -> ExitCode {
    let cli = match commands::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(4) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Accepted) => {
            println!("ACCEPT");
            ExitCode::SUCCESS
        }
        Ok(Outcome::Rejected) => {
            println!("REJECT");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("graphsig: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
