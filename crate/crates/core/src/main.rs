use std::io;
use std::process::ExitCode;

use clap::Parser;

use subtok::cli::{self, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = cli::configure_threads().and_then(|()| cli::run(cli, &mut io::stdout().lock()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("subtok: {err}");
            ExitCode::from(cli::exit_code_for(&err) as u8)
        }
    }
}
