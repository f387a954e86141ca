fn main() {
    std::process::exit(flowscope::cli::run(std::env::args_os()));
}
