fn main() {
    std::process::exit(erase::cli::run(std::env::args_os()));
}
