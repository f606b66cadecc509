fn main() {
    std::process::exit(ekmanlab_cli::main_with_args(std::env::args_os()));
}
