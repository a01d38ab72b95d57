fn main() {
    std::process::exit(sdde::cli::run(std::env::args_os()));
}
