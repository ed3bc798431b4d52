fn main() {
    std::process::exit(ctxdecomp::cli::main_with_args(std::env::args_os().collect()));
}
