fn main() {
    std::process::exit(gbsde::experiments::cli::main_with_args(std::env::args_os()));
}
