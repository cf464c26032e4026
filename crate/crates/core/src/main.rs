fn main() {
    let code = toppress::cli::run(std::env::args_os());
    std::process::exit(code);
}
