fn main() {
    std::process::exit(mtdc::cli::cli_main(std::env::args_os()));
}
