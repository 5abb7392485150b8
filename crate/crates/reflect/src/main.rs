fn main() {
    std::process::exit(reflect::cli::main_with_args(std::env::args_os()));
}
