fn main() {
    std::process::exit(tsa_core::cli::dispatch(std::env::args_os()));
}
