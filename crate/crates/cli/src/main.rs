fn main() {
    std::process::exit(conformable_cli::run_cli(std::env::args_os()));
}
