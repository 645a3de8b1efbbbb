fn main() {
    std::process::exit(biot_cli::main_with_args(std::env::args_os()));
}
