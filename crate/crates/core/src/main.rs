use std::process::ExitCode;

use clap::Parser;

use bidcurve::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(status) if status.failed == 0 => ExitCode::SUCCESS,
        Ok(status) => {
            eprintln!("{} campaign(s) failed", status.failed);
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
