fn main() {
    std::process::exit(tvarch::cli::main_from(std::env::args_os()));
}
