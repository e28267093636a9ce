use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use iai_track::commands::{env_seed, run, Cli, SEED_ENV};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = env_seed(std::env::var(SEED_ENV).ok()).and_then(|seed| run(cli, seed));
    match result {
        Ok(out) => {
            print!("{out}");
            let _ = std::io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("iaitrack: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
