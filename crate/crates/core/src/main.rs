fn main() {
    std::process::exit(roughtail::cli::main_with_args(std::env::args_os()));
}
