fn main() {
    std::process::exit(gapcurve::cli::run(std::env::args_os()));
}
