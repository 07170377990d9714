fn main() {
    std::process::exit(grag::cli::run(std::env::args_os()));
}
