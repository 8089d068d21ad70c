fn main() {
    std::process::exit(srsdef::cli::main_with_args());
}
