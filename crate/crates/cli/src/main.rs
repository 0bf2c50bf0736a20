use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = cwiv_cli::Cli::parse();
    match cwiv_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
