fn main() {
    std::process::exit(nnlogic::cli::main_with_args(std::env::args_os()));
}
