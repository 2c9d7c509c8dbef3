fn main() {
    std::process::exit(chimera_cli::run(std::env::args_os()));
}
