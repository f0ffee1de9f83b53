fn main() {
    std::process::exit(t3sgi::cli::run(std::env::args_os()));
}
