fn main() {
    std::process::exit(voxaug::cli::main());
}
