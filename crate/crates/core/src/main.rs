fn main() {
    std::process::exit(unetgan::cli::main_with_args(std::env::args_os()));
}
