fn main() {
    std::process::exit(temnn::cli::main_with(std::env::args_os()));
}
