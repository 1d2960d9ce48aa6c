fn main() {
    std::process::exit(frontfuse::cli::run(std::env::args_os()));
}
