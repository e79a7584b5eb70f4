fn main() {
    std::process::exit(litedepth::cli::main_with_args(std::env::args_os()));
}
