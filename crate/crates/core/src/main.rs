fn main() {
    std::process::exit(dara::cli::run(std::env::args_os()));
}
