fn main() -> std::process::ExitCode {
    qbgmm_cli::main_with_args(std::env::args_os())
}
