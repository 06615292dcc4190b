fn main() {
    std::process::exit(gsdet_cli::run_from(std::env::args_os()));
}
