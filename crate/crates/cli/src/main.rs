fn main() {
    std::process::exit(tfqkd_cli::main_with_args(std::env::args_os()));
}
