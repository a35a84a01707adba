fn main() {
    std::process::exit(ebstokes::cli::main_with_args(std::env::args_os()));
}
