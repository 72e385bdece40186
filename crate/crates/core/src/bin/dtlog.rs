fn main() {
    std::process::exit(dtlog::cli::run(std::env::args_os()));
}
