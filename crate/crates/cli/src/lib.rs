//! Command-line driver for `pomdp-aa`.
//!
//! Exit codes: 0 success, 1 parse or file error, 2 configuration error,
//! 3 iteration limit reached without meeting the tolerance.

use std::fmt;
use std::path::{Path, PathBuf};

use pomdp_aa::parser::ParseError;

pub mod args;
pub mod commands;
pub mod files;

pub use args::Cli;

#[derive(Debug)]
pub enum CliError {
    File { path: PathBuf, message: String },
    Parse(ParseError),
    Config(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::File {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    pub fn csv(path: &Path, e: csv::Error) -> Self {
        CliError::File {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::File { .. } | CliError::Parse(_) => 1,
            CliError::Config(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::File { path, message } => write!(f, "{}: {message}", path.display()),
            CliError::Parse(e) => write!(f, "{e}"),
            CliError::Config(m) => write!(f, "invalid configuration: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        CliError::Parse(e)
    }
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_MAX_ITER: u8 = 3;

/// Runs one parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> u8 {
    let result = match cli.command {
        args::Command::Solve(a) => commands::solve(&a),
        args::Command::Eval(a) => commands::eval(&a),
        args::Command::Bench(a) => commands::bench(&a),
        args::Command::Replay(a) => commands::replay(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
