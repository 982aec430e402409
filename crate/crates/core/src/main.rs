fn main() {
    std::process::exit(tabreduce::cli::main_with_args(std::env::args().collect()));
}
