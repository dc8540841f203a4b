fn main() {
    std::process::exit(ouflow_cli::run(std::env::args_os()));
}
