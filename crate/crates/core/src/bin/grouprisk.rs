fn main() {
    std::process::exit(grouprisk::cli::run(std::env::args_os()));
}
