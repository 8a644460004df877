use std::process::ExitCode;

fn main() -> ExitCode {
    qcity::cli::main_with(std::env::args_os())
}
