fn main() {
    std::process::exit(sirs_etc::cli::main_with_args(std::env::args_os()));
}
