fn main() {
    std::process::exit(subfreq::cli::main_with_args(std::env::args_os()));
}
