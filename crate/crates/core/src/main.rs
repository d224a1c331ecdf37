fn main() {
    std::process::exit(bartviz::cli::run());
}
