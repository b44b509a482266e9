fn main() {
    std::process::exit(formation_cli::run_cli(std::env::args_os()));
}
