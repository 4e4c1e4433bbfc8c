fn main() {
    std::process::exit(riesz_ellipsoid::cli::run(std::env::args_os()));
}
