fn main() {
    std::process::exit(multidescent::cli::main_with_args(std::env::args_os()));
}
