use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let args = forge_cli::cli::Cli::parse();
    match forge_cli::cli::execute(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
