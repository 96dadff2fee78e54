use std::process::ExitCode;

fn main() -> ExitCode {
    multitopic::cli::main()
}
