fn main() {
    std::process::exit(memgat_cli::run(std::env::args_os()));
}
