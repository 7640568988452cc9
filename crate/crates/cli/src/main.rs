use std::process::ExitCode;

fn main() -> ExitCode {
    let code = mlnmt_cli::run(std::env::args_os().collect());
    ExitCode::from(code as u8)
}
