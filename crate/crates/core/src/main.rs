fn main() {
    std::process::exit(r3mem::cli::run(std::env::args_os()));
}
