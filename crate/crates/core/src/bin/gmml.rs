fn main() {
    std::process::exit(gmm_landscape::cli::main_with_args(std::env::args_os()));
}
