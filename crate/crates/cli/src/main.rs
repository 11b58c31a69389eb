fn main() {
    std::process::exit(datavalue_cli::run(std::env::args_os()));
}
