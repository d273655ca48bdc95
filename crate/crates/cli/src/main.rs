fn main() {
    std::process::exit(prorata_cli::run_from(std::env::args_os()));
}
