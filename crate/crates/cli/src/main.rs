fn main() {
    std::process::exit(intraday_fts::cli::main_with(std::env::args_os()));
}
