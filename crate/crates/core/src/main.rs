fn main() {
    let code = edutag::cli::run(std::env::args_os());
    std::process::exit(code);
}
