use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use qrm_cli::cli::Cli;
use qrm_cli::error::error_line;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            eprintln!("{}", error_line("usage", e.to_string().trim().to_string()));
            return ExitCode::from(2);
        }
    };
    match qrm_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
