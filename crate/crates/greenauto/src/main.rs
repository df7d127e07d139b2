fn main() {
    std::process::exit(greenauto::cli::run(std::env::args_os()));
}
