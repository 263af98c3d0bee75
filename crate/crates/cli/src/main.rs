use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(perfridge_cli::run_main(std::env::args_os()))
}
