fn main() {
    std::process::exit(pubbias::cli::run(std::env::args_os()));
}
