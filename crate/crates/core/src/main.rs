fn main() {
    std::process::exit(trust_core::cli::run(std::env::args_os()));
}
