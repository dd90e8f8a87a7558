use std::process::ExitCode;

fn main() -> ExitCode {
    match hwcheck_cli::run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(hwcheck_cli::CliError::Info(text)) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("hwcheck: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
