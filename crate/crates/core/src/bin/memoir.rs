fn main() {
    std::process::exit(memoir::cli::run(std::env::args_os()));
}
