fn main() {
    std::process::exit(segflow::cli::run(std::env::args_os()));
}
