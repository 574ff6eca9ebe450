fn main() {
    std::process::exit(mqed::cli::main_with_args(std::env::args_os()));
}
