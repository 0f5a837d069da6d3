use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(volray::cli::run(std::env::args_os()))
}
