fn main() {
    std::process::exit(infosel::cli::run(std::env::args_os()));
}
