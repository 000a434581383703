use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(texvib_cli::run(std::env::args_os()))
}
