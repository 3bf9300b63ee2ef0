fn main() {
    std::process::exit(assan::cli::main());
}
