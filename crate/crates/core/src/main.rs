fn main() {
    std::process::exit(gorf::cli::run(std::env::args_os()));
}
