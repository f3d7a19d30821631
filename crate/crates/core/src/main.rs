fn main() {
    std::process::exit(causticlab::cli::main_with_args(std::env::args()));
}
