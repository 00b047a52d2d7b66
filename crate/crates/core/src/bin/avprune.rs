fn main() {
    std::process::exit(avprune::cli::run(std::env::args_os()));
}
