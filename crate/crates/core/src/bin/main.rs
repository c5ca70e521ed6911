fn main() {
    std::process::exit(exfront::cli::run(std::env::args_os()));
}
