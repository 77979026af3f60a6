fn main() {
    std::process::exit(mflqr::cli::run(std::env::args_os()));
}
