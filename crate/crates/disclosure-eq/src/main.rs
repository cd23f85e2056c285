fn main() {
    std::process::exit(disclosure_eq::cli::main_with_args(std::env::args_os()));
}
