use std::io::Write;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use stemsim_cli::cli::{run, Cli};
use stemsim_cli::ErrorBody;

fn fail(code: &str, message: String, exit: u8) -> ExitCode {
    let body = ErrorBody {
        error_code: code.into(),
        message,
    };
    eprintln!("{}", serde_json::to_string(&body).expect("error body serializes"));
    ExitCode::from(exit)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or_default().trim_start_matches("error: ");
            return fail("UsageError", first.to_string(), 2);
        }
    };
    match run(cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(out.as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.code(), e.to_string(), 1),
    }
}
