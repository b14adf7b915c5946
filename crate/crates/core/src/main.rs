use std::process::ExitCode;

fn main() -> ExitCode {
    anomaly_verify::cli::run(std::env::args_os())
}
