use std::process::ExitCode;

use makeitso_service::cli;

fn main() -> ExitCode {
    let outcome = cli::parse(std::env::args_os()).and_then(|c| match c {
        Some(c) => cli::run(c),
        None => Ok(()),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
