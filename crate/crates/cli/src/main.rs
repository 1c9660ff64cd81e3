fn main() {
    std::process::exit(erasim_cli::main_with_args(std::env::args_os()));
}
