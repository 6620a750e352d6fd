use std::process::ExitCode;

use clap::Parser;
use pomdp_aa_cli::{run, Cli};

fn main() -> ExitCode {
    ExitCode::from(run(Cli::parse()))
}
