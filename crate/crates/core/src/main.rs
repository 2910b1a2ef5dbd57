fn main() {
    std::process::exit(nortasp::cli::run(std::env::args_os()));
}
