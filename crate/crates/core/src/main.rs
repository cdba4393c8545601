fn main() {
    std::process::exit(soie::cli::main_with_args(std::env::args_os()));
}
