fn main() {
    std::process::exit(riskfed::cli::main_with_args(std::env::args_os()));
}
