use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    match twimob_cli::run(twimob_cli::Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
