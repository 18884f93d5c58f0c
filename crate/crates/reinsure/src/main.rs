fn main() {
    std::process::exit(reinsure::run(std::env::args_os()));
}
