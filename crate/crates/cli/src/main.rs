use std::process::ExitCode;

use clap::Parser;
use reachgrad_cli::{exit, init_logging, run, Cli};

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("reachgrad: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
