fn main() {
    std::process::exit(lunar_descent_cli::app::run(std::env::args_os()));
}
