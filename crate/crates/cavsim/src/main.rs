fn main() {
    std::process::exit(cavsim::cli::run(std::env::args_os()));
}
