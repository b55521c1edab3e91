fn main() {
    std::process::exit(narrownet::cli::run());
}
