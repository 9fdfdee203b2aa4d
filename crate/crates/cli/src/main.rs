fn main() {
    std::process::exit(specreg_cli::run(std::env::args_os()));
}
