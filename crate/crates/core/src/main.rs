fn main() {
    std::process::exit(expandnet::cli::run(std::env::args_os()));
}
