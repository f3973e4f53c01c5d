use std::process::ExitCode;

fn main() -> ExitCode {
    palletsynth::cli::main_with_args(std::env::args_os())
}
