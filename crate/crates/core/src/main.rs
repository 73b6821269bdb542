fn main() {
    std::process::exit(beamsquint::cli::dispatch(std::env::args_os()));
}
