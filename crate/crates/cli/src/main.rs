fn main() {
    std::process::exit(polypat::experiments::cli_main(std::env::args_os()));
}
