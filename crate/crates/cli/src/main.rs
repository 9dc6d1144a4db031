use std::process::ExitCode;

use shapesearch_cli::{run, Failure};

fn main() -> ExitCode {
    match run(std::env::args_os()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        // clap formats its own messages, help and version included.
        Err(Failure::Parse(e)) => e.exit(),
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
