fn main() {
    std::process::exit(lbpmarkdex::cli::run(std::env::args_os()));
}
