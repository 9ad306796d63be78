fn main() {
    std::process::exit(arbc::cli::main());
}
