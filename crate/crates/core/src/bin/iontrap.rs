fn main() {
    std::process::exit(ionwork::cli::run(std::env::args_os()));
}
