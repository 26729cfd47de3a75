fn main() {
    std::process::exit(superint::cli::run(std::env::args_os()));
}
