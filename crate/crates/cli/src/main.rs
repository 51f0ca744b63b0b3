use std::process::ExitCode;

fn main() -> ExitCode {
    let out = ellipsoid_cr_cli::run(std::env::args_os());
    if !out.stdout.is_empty() {
        println!("{}", out.stdout);
    }
    if !out.stderr.is_empty() {
        eprintln!("{}", out.stderr);
    }
    ExitCode::from(out.code as u8)
}
