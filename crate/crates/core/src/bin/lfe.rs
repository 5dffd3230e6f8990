fn main() {
    std::process::exit(lfe_core::cli::run(std::env::args_os()));
}
