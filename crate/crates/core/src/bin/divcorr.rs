fn main() {
    std::process::exit(divcorr::cli::run(std::env::args_os()));
}
