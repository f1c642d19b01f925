fn main() {
    std::process::exit(frog_cli::run(std::env::args_os()));
}
