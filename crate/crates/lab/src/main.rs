use std::process::ExitCode;

use clap::Parser;
use pref_lab::cli::{run, Cli};
use pref_lab::verify::default_gradient_cases;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli, &default_gradient_cases()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
