fn main() {
    std::process::exit(gaucoll::cli::main());
}
