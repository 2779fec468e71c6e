use std::process::ExitCode;

use clap::Parser;
use hdqlr::app::{run, Cli};
use hdqlr::report::to_json_line;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if let Some(doc) = err.document() {
                if let Ok(text) = to_json_line(&doc) {
                    print!("{text}");
                }
            }
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
