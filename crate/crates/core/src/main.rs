fn main() {
    std::process::exit(cpflow::cli::run(std::env::args_os()));
}
