fn main() {
    std::process::exit(nlpt::cli::main_with_args(std::env::args_os()));
}
