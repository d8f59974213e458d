fn main() {
    std::process::exit(qntk_lab::cli::main_with_args(std::env::args_os()));
}
