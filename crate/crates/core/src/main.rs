fn main() {
    std::process::exit(tgf_cda::cli::run(std::env::args_os()));
}
