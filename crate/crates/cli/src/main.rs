fn main() {
    std::process::exit(slabgff_cli::run(std::env::args().collect()));
}
