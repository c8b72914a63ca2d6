fn main() {
    std::process::exit(semtransfer_cli::run(std::env::args_os()));
}
