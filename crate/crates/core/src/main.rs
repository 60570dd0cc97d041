fn main() {
    std::process::exit(freqmod::cli::run(std::env::args_os()));
}
