fn main() {
    std::process::exit(krflow::cli::dispatch(std::env::args_os()));
}
