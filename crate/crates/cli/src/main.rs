fn main() {
    std::process::exit(densecorr_cli::main_with_args(std::env::args_os()));
}
