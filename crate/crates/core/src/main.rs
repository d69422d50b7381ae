use std::process::ExitCode;

fn main() -> ExitCode {
    punctfuse::cli::main_with_args(std::env::args_os())
}
