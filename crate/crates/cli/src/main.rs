fn main() {
    if let Err(e) = nustab_cli::configure_threads() {
        eprintln!("error: {e}");
        std::process::exit(e.code);
    }
    std::process::exit(nustab_cli::run(std::env::args_os()));
}
