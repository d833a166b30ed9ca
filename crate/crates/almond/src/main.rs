fn main() {
    std::process::exit(almond::cli::run(std::env::args_os()));
}
