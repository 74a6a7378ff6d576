fn main() {
    std::process::exit(nldiv::cli::run(std::env::args_os()));
}
