fn main() {
    std::process::exit(c3_harness::cli::main_with_args(std::env::args_os()));
}
