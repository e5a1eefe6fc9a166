fn main() -> std::process::ExitCode {
    sleepnet_cli::main_with_args(std::env::args_os())
}
