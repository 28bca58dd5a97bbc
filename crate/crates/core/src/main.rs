use std::process::ExitCode;

fn main() -> ExitCode {
    deci::cli::main_with_args(std::env::args_os())
}
