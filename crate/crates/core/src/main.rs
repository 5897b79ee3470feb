fn main() {
    std::process::exit(flowdc::cli::main_with_args(std::env::args_os()));
}
