use std::process::ExitCode;

use clap::Parser;
use gmmcc::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("gmmcc: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
