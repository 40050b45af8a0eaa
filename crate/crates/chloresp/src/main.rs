fn main() {
    std::process::exit(chloresp::cli::cli_main(std::env::args_os()));
}
