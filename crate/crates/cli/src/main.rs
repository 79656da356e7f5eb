use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    fhirlens::run(fhirlens::Cli::parse())
}
