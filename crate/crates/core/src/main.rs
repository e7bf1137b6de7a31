fn main() {
    archsearch::cli::init_logging();
    let code = archsearch::cli::run(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
