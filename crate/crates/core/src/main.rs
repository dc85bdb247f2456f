use std::process::ExitCode;

use clap::Parser;
use private_ratio::cli::{run, Cli};

fn main() -> ExitCode {
    run(Cli::parse())
}
