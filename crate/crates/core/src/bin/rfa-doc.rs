fn main() {
    std::process::exit(rfa_doc::cli::run(std::env::args_os()));
}
