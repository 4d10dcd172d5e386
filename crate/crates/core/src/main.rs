fn main() {
    std::process::exit(gluedet::cli::run(std::env::args_os()));
}
