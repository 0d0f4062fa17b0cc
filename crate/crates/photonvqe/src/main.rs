fn main() {
    std::process::exit(photonvqe::cli::dispatch(std::env::args_os()));
}
