fn main() {
    std::process::exit(odesel::cli::run(std::env::args_os()));
}
