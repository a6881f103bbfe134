fn main() {
    std::process::exit(nhfield::cli::run());
}
