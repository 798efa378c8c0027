fn main() {
    std::process::exit(pivotblend::cli::run(std::env::args_os()));
}
