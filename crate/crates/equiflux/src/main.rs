fn main() {
    std::process::exit(equiflux::harness::cli_main());
}
