fn main() -> std::process::ExitCode {
    qng::cli::main_with_args(std::env::args_os())
}
