fn main() {
    std::process::exit(orbitclt::cli::main_with(std::env::args_os()));
}
