use std::process::ExitCode;

use chunk_cascade::cli::{run, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli, &mut std::io::stdout()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("chunk-cascade: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
