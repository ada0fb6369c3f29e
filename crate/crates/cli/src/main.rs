use std::process::ExitCode;

use clap::Parser;
use mnri_cli::{run, Cli};

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mnri: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
