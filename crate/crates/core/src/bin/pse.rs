fn main() {
    pse::cli::init_logging();
    std::process::exit(pse::cli::run(std::env::args_os()));
}
