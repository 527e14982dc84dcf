fn main() {
    std::process::exit(pararl::cli::cli_main(std::env::args_os()));
}
