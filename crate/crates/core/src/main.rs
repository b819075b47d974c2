use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    anisomax::cli::main_with(anisomax::cli::Cli::parse())
}
