fn main() {
    std::process::exit(resochain::cli::main());
}
