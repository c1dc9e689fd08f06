fn main() {
    std::process::exit(robust_active_inference::cli::main_with_args(std::env::args_os()));
}
