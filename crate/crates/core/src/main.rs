fn main() {
    std::process::exit(trendforge::cli::run(std::env::args_os()));
}
