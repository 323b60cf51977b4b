use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(reidbench::run(std::env::args_os()))
}
