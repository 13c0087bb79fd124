fn main() {
    let code = msdetect::cli::run(std::env::args_os());
    std::process::exit(code);
}
