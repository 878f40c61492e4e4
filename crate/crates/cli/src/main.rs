fn main() {
    std::process::exit(esig_cli::main_with_args(std::env::args_os()));
}
