fn main() {
    std::process::exit(causal_rd::cli::main_with_args(std::env::args_os()));
}
