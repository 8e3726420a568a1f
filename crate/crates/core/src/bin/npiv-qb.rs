fn main() {
    std::process::exit(npiv_qb::harness::cli::run(std::env::args_os()));
}
