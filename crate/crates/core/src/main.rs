fn main() {
    std::process::exit(quenchnet::cli::run(std::env::args_os()));
}
