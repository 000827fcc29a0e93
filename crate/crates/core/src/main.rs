fn main() {
    std::process::exit(robust_tc::cli::run(std::env::args_os()));
}
