fn main() {
    std::process::exit(pathattr::cli::run(std::env::args_os()));
}
