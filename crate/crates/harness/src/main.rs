use std::process::ExitCode;

use clap::Parser;
use sembind_harness::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            println!("{}", outcome.message);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("sembind {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
