fn main() {
    std::process::exit(qcsys_cli::run(std::env::args_os()));
}
